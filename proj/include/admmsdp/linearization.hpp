#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "admmsdp/core_linalg.hpp"
#include "admmsdp/problem.hpp"
#include "admmsdp/random.hpp"

namespace admmsdp {

/// Hadamard multipliers of the differential of Pi at a nonsingular Z*.
/// With the spectrum sorted descending and r positive eigenvalues,
///   Omega = [ E_r  Theta^T ; Theta  0 ],  Theta_ij = l_j / (l_j - l_{r+i}).
struct OmegaStructure {
  Index n = 0;
  Index r = 0;
  Matrix Qstar;
  Vector lambda;
  Matrix Omega;
  Matrix Theta;
  Matrix OmegaPerp;
  Matrix ThetaPerp;

  Matrix to_local(const SymMat& h) const { return Qstar.transpose() * h.mat() * Qstar; }
  SymMat from_local(const Matrix& g) const {
    return SymMat(Qstar * g * Qstar.transpose());
  }
};

/// Relative cutoff separating the nonsingular and singular analysis paths.
inline constexpr double kSingularGate = 1e-8;

inline OmegaStructure build_omega(const SpectralDecomp& d) {
  const Index n = d.n();
  const double lmax = n ? d.lambda.cwiseAbs().maxCoeff() : 0.0;
  for (Index i = 0; i < n; ++i) {
    if (!(std::abs(d.lambda(i)) > 1e-12 * lmax)) {
      std::ostringstream os;
      os << "build_omega: reference matrix is singular (|lambda_" << i + 1
         << "| = " << std::abs(d.lambda(i)) << ", max |lambda| = " << lmax
         << "); use the directional-derivative path";
      throw DomainError(os.str());
    }
  }
  OmegaStructure os;
  os.n = n;
  os.Qstar = d.Q;
  os.lambda = d.lambda;
  Index r = 0;
  while (r < n && d.lambda(r) > 0.0) ++r;
  os.r = r;
  const Index q = n - r;
  os.Theta.resize(q, r);
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < r; ++j)
      os.Theta(i, j) = d.lambda(j) / (d.lambda(j) - d.lambda(r + i));
  os.ThetaPerp = Matrix::Ones(q, r) - os.Theta;
  os.Omega = join_blocks(Matrix::Ones(r, r), os.Theta, Matrix::Zero(q, q));
  os.OmegaPerp = Matrix::Ones(n, n) - os.Omega;
  return os;
}

inline bool is_nonsingular_reference(const SpectralDecomp& d,
                                     double gate = kSingularGate) {
  if (d.n() == 0) return true;
  const double lmax = d.lambda.cwiseAbs().maxCoeff();
  return d.lambda.cwiseAbs().minCoeff() > gate * lmax;
}

/// Q (Omega o (Q^T H Q)) Q^T, the differential of Pi at Z* applied to H.
inline SymMat apply_omega(const OmegaStructure& os, const SymMat& h) {
  return os.from_local(os.Omega.cwiseProduct(os.to_local(h)));
}

/// M(H) = P(OmegaPerp o H) + P_perp(Omega o H), Hadamard products in Q* coordinates.
inline SymMat apply_M(const OmegaStructure& os, const ConstraintKernel& kernel,
                      const SymMat& h) {
  const SymMat a = apply_omega(os, h);
  return kernel.project_range(h - 2.0 * a) + a;
}

/// M*(G) = OmegaPerp o (P G) + Omega o (P_perp G).
inline SymMat apply_M_adjoint(const OmegaStructure& os, const ConstraintKernel& kernel,
                              const SymMat& g) {
  const SymMat pg = kernel.project_range(g);
  return pg + apply_omega(os, g - 2.0 * pg);
}

/// Psi = (I - 2P)(Pi(Z) - Pi(Z*) - Omega o (Z - Z*)).
inline SymMat psi_residual(const OmegaStructure& os, const ConstraintKernel& kernel,
                           const SymMat& z, const SymMat& zstar) {
  const SymMat d = psd_project(z) - psd_project(zstar) - apply_omega(os, z - zstar);
  return d - 2.0 * kernel.project_range(d);
}

/// Orthonormal basis of Fix(M) (svec coordinates in the columns of `coords`).
struct FixSubspace {
  std::vector<SymMat> basis;
  Matrix coords;
  Index dim_x = 0;
  Index dim_s = 0;

  Index dim() const { return static_cast<Index>(basis.size()); }

  SymMat project(const SymMat& h) const {
    if (basis.empty()) return SymMat::zero(h.n());
    return smat(coords * (coords.transpose() * svec(h)));
  }
};

/// Orthonormal null-space basis of a (rows x cols) matrix at threshold
/// rel_tol * sigma_max.
inline Matrix null_space(const Matrix& a, double rel_tol) {
  const Index cols = a.cols();
  if (cols == 0) return Matrix(0, 0);
  if (a.rows() == 0) return Matrix::Identity(cols, cols);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double thr = rel_tol * (sv.size() ? sv(0) : 0.0);
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > thr) ++rank;
  return svd.matrixV().rightCols(cols - rank);
}

/// Embeds a k x k symmetric block given by svec coordinates at offset `off`.
inline SymMat embed_block(const OmegaStructure& os, const Vector& v, Index off) {
  const SymMat b = smat(v);
  Matrix g = Matrix::Zero(os.n, os.n);
  g.block(off, off, b.n(), b.n()) = b.mat();
  return os.from_local(g);
}

inline FixSubspace fix_basis(const OmegaStructure& os, const ConstraintKernel& kernel,
                             double rel_tol = 1e-9) {
  const Index n = os.n, r = os.r, q = n - r;
  FixSubspace fs;
  std::vector<SymMat> out;

  // [B_X 0; 0 0] in N(A): <Q_X^T A_i Q_X, B_X> = 0 for all i.
  if (r > 0) {
    const Matrix qx = os.Qstar.leftCols(r);
    const Matrix& w = kernel.svec_columns();
    Matrix rows(kernel.m(), svec_length(r));
    for (Index i = 0; i < kernel.m(); ++i) {
      const Matrix ai = smat(w.col(i)).mat();
      rows.row(i) = svec(SymMat(qx.transpose() * ai * qx)).transpose();
    }
    const Matrix ns = null_space(rows, rel_tol);
    for (Index k = 0; k < ns.cols(); ++k) out.push_back(embed_block(os, ns.col(k), 0));
    fs.dim_x = ns.cols();
  }
  // [0 0; 0 B_S] in R(A*): (I - B B^T) V c = 0.
  if (q > 0 && kernel.m() > 0) {
    const Index t = svec_length(q);
    Matrix v(svec_length(n), t);
    for (Index k = 0; k < t; ++k) {
      v.col(k) = svec(embed_block(os, Vector::Unit(t, k), r));
    }
    const Matrix& b = kernel.basis();
    const Matrix resid = v - b * (b.transpose() * v);
    const Matrix ns = null_space(resid, rel_tol);
    for (Index k = 0; k < ns.cols(); ++k) out.push_back(embed_block(os, ns.col(k), r));
    fs.dim_s = ns.cols();
  }
  fs.coords.resize(svec_length(n), static_cast<Index>(out.size()));
  for (Index k = 0; k < fs.coords.cols(); ++k) fs.coords.col(k) = svec(out[k]);
  fs.basis = std::move(out);
  return fs;
}

struct PowerIterationOptions {
  double tol = 1e-10;
  long max_iter = 100000;
  std::uint64_t seed = 20240917;
};

struct NormEstimate {
  double value = 0;
  long iterations = 0;
};

/// sqrt of the top eigenvalue of T* T by power iteration, T given through
/// apply and adjoint callbacks on n x n symmetric matrices.
template <class Op, class Adj>
NormEstimate power_norm(Index n, Op&& op, Adj&& adj, const PowerIterationOptions& opt) {
  Rng rng(opt.seed);
  SymMat h = rng.sym_gaussian(n);
  h = (1.0 / h.norm_fro()) * h;
  double prev = -1.0, prev2 = -1.0;
  for (long it = 1; it <= opt.max_iter; ++it) {
    const SymMat th = op(h);
    const double rq = inner(th, th);
    if (std::abs(rq - prev) < opt.tol) return {std::sqrt(rq), it};
    prev2 = prev;
    prev = rq;
    const SymMat g = adj(th);
    const double gn = g.norm_fro();
    if (gn == 0.0) return {0.0, it};
    h = (1.0 / gn) * g;
  }
  std::ostringstream os;
  os << "power iteration did not converge in " << opt.max_iter
     << " iterations; last estimates " << std::sqrt(std::max(prev2, 0.0)) << " and "
     << std::sqrt(std::max(prev, 0.0));
  throw NumericalFailure(os.str());
}

inline NormEstimate op_norm_M_estimate(const OmegaStructure& os,
                                       const ConstraintKernel& kernel,
                                       const PowerIterationOptions& opt = {}) {
  return power_norm(
      os.n, [&](const SymMat& h) { return apply_M(os, kernel, h); },
      [&](const SymMat& g) { return apply_M_adjoint(os, kernel, g); }, opt);
}

inline double op_norm_M(const OmegaStructure& os, const ConstraintKernel& kernel,
                        const PowerIterationOptions& opt = {}) {
  return op_norm_M_estimate(os, kernel, opt).value;
}

inline double op_norm_M_minus_fix(const OmegaStructure& os,
                                  const ConstraintKernel& kernel,
                                  const FixSubspace& fix,
                                  const PowerIterationOptions& opt = {}) {
  const double v =
      power_norm(
          os.n,
          [&](const SymMat& h) { return apply_M(os, kernel, h) - fix.project(h); },
          [&](const SymMat& g) { return apply_M_adjoint(os, kernel, g) - fix.project(g); },
          opt)
          .value;
  if (!(v < 1.0 - 1e-8)) {
    std::ostringstream os_;
    os_ << "op_norm_M_minus_fix: estimate " << v << " is not below 1 - 1e-8";
    throw NumericalFailure(os_.str());
  }
  return v;
}

/// Index sets at a possibly singular Z*: alpha (positive, size r), beta
/// (numerically zero), gamma (negative, size s), in descending order.
struct DirectionalStructure {
  Index n = 0;
  Index r = 0;
  Index s = 0;
  Matrix Qstar;
  Vector lambda;
  /// ThetaTilde_ij = l_j / (l_j - l_{n-s+i}), s x r.
  Matrix ThetaTilde;

  Index beta() const { return n - r - s; }
};

inline DirectionalStructure build_directional(const SpectralDecomp& d,
                                              double gate = kSingularGate) {
  DirectionalStructure ds;
  ds.n = d.n();
  ds.Qstar = d.Q;
  ds.lambda = d.lambda;
  const double lmax = ds.n ? d.lambda.cwiseAbs().maxCoeff() : 0.0;
  const double thr = gate * lmax;
  for (Index i = 0; i < ds.n; ++i) {
    if (d.lambda(i) > thr) ++ds.r;
    if (d.lambda(i) < -thr) ++ds.s;
  }
  ds.ThetaTilde.resize(ds.s, ds.r);
  for (Index i = 0; i < ds.s; ++i)
    for (Index j = 0; j < ds.r; ++j)
      ds.ThetaTilde(i, j) = d.lambda(j) / (d.lambda(j) - d.lambda(ds.n - ds.s + i));
  return ds;
}

/// Directional derivative of Pi at Z* in direction H (block formula; Pi acts
/// on the beta-beta block, gamma-beta and gamma-gamma blocks vanish).
inline SymMat directional_derivative(const DirectionalStructure& ds, const SymMat& h) {
  const Index r = ds.r, b = ds.beta(), s = ds.s, n = ds.n;
  const Matrix g = ds.Qstar.transpose() * h.mat() * ds.Qstar;
  Matrix d = Matrix::Zero(n, n);
  d.topLeftCorner(r, r) = g.topLeftCorner(r, r);
  d.block(r, 0, b, r) = g.block(r, 0, b, r);
  d.block(0, r, r, b) = g.block(0, r, r, b);
  const Matrix ga = ds.ThetaTilde.cwiseProduct(g.block(n - s, 0, s, r));
  d.block(n - s, 0, s, r) = ga;
  d.block(0, n - s, r, s) = ga.transpose();
  if (b > 0) d.block(r, r, b, b) = psd_project(SymMat(g.block(r, r, b, b))).mat();
  return SymMat(ds.Qstar * d * ds.Qstar.transpose());
}

/// M~(H) = P(H - D(H)) + P_perp(D(H)).
inline SymMat apply_M_tilde(const DirectionalStructure& ds, const ConstraintKernel& kernel,
                            const SymMat& h) {
  const SymMat d = directional_derivative(ds, h);
  return kernel.project_range(h - 2.0 * d) + d;
}

namespace detail {

/// Linearization of D at H (D is piecewise linear; on H's piece the beta
/// block map is the differential of Pi at H_bb). Self-adjoint.
struct LocalD {
  const DirectionalStructure* ds;
  Matrix U;      // eigenvectors of H_bb
  Matrix Wbeta;  // divided-difference multipliers in U coordinates

  LocalD(const DirectionalStructure& d, const SymMat& h) : ds(&d) {
    const Index b = d.beta();
    if (b == 0) return;
    const Matrix g = d.Qstar.transpose() * h.mat() * d.Qstar;
    const auto e = eig_sym(SymMat(g.block(d.r, d.r, b, b)));
    U = e.Q;
    Wbeta.resize(b, b);
    for (Index i = 0; i < b; ++i)
      for (Index j = 0; j < b; ++j) {
        const double li = e.lambda(i), lj = e.lambda(j);
        const double pi = std::max(li, 0.0), pj = std::max(lj, 0.0);
        if (li != lj) {
          Wbeta(i, j) = (pi - pj) / (li - lj);
        } else {
          Wbeta(i, j) = li > 0.0 ? 1.0 : 0.0;
        }
      }
  }

  SymMat apply(const SymMat& k) const {
    const auto& d = *ds;
    const Index r = d.r, b = d.beta(), s = d.s, n = d.n;
    const Matrix g = d.Qstar.transpose() * k.mat() * d.Qstar;
    Matrix out = Matrix::Zero(n, n);
    out.topLeftCorner(r, r) = g.topLeftCorner(r, r);
    out.block(r, 0, b, r) = g.block(r, 0, b, r);
    out.block(0, r, r, b) = g.block(0, r, r, b);
    const Matrix ga = d.ThetaTilde.cwiseProduct(g.block(n - s, 0, s, r));
    out.block(n - s, 0, s, r) = ga;
    out.block(0, n - s, r, s) = ga.transpose();
    if (b > 0) {
      const Matrix kb = U.transpose() * g.block(r, r, b, b) * U;
      out.block(r, r, b, b) = U * Wbeta.cwiseProduct(kb) * U.transpose();
    }
    return SymMat(d.Qstar * out * d.Qstar.transpose());
  }
};

}  // namespace detail

struct RhoEstimate {
  double value = 0;
  long samples = 0;
  long ascent_steps = 0;
};

struct RhoOptions {
  long max_ascent = 5000;
  double tol = 1e-13;
};

/// Lower estimate of sup_{||H||=1} ||M~(H)|| by local ascent from the given
/// starting directions. Not a certificate.
inline RhoEstimate rho_nd_estimate(const DirectionalStructure& ds,
                                   const ConstraintKernel& kernel,
                                   const std::vector<SymMat>& starts,
                                   const RhoOptions& opt = {}) {
  RhoEstimate est;
  for (const SymMat& h0 : starts) {
    const double n0 = h0.norm_fro();
    if (n0 == 0.0) continue;
    SymMat h = (1.0 / n0) * h0;
    double prev = -1.0;
    for (long it = 0; it < opt.max_ascent; ++it) {
      const SymMat mh = apply_M_tilde(ds, kernel, h);
      const double val = mh.norm_fro();
      est.value = std::max(est.value, val);
      ++est.ascent_steps;
      if (std::abs(val - prev) < opt.tol) break;
      prev = val;
      // Adjoint of the local linear piece: P K + D_H(P_perp K - P K).
      const detail::LocalD loc(ds, h);
      const SymMat pk = kernel.project_range(mh);
      const SymMat g = pk + loc.apply(mh - 2.0 * pk);
      const double gn = g.norm_fro();
      if (gn == 0.0) break;
      h = (1.0 / gn) * g;
    }
    ++est.samples;
  }
  return est;
}

inline RhoEstimate rho_nd_estimate(const DirectionalStructure& ds,
                                   const ConstraintKernel& kernel, long samples,
                                   std::uint64_t seed, const RhoOptions& opt = {}) {
  if (samples < 1) throw DomainError("rho_nd_estimate: samples must be >= 1");
  Rng rng(seed);
  std::vector<SymMat> starts;
  for (long i = 0; i < samples; ++i) starts.push_back(rng.sym_gaussian(ds.n));
  return rho_nd_estimate(ds, kernel, starts, opt);
}

}  // namespace admmsdp
