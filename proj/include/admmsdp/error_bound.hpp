#pragma once

#include <json.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "admmsdp/core_linalg.hpp"
#include "admmsdp/linearization.hpp"

namespace admmsdp {

/// State of the iterative elimination, expressed in the eigenbasis of the
/// reference matrix. The current block matrix [Zx Zo^T; Zo Zs] equals
/// Y^T Z0 Y, where Z0 = diag(lambda) + Q^T H Q.
struct EliminationState {
  long ell = 0;
  Matrix Zx;
  Matrix Zs;
  Matrix Zo;
  Matrix Y;
  Matrix V;
  /// ||Z0||_2, fixed for the whole run.
  double z0_norm = 0;

  Index r() const { return Zx.rows(); }
  Index n() const { return Zx.rows() + Zs.rows(); }
  Matrix block() const { return join_blocks(Zx, Zo, Zs); }
};

inline EliminationState make_elimination_state(const Matrix& z0, Index r) {
  EliminationState st;
  const Matrix zs = 0.5 * (z0 + z0.transpose());
  const auto b = split_blocks(zs, r);
  st.Zx = b.X;
  st.Zs = b.S;
  st.Zo = b.O;
  st.Y = Matrix::Identity(zs.rows(), zs.rows());
  st.z0_norm = norm2(zs);
  st.V = join_blocks(st.Zx, Matrix::Zero(b.O.rows(), r),
                     Matrix::Zero(b.S.rows(), b.S.rows()));
  return st;
}

/// sqrt(min(r, n-r)) / (lambda_min(Zx) - lambda_max(Zs)).
inline double elimination_eta(const EliminationState& st) {
  const Index r = st.r(), q = st.Zs.rows();
  const double d = std::sqrt(static_cast<double>(std::min(r, q)));
  return d / (lambda_min(st.Zx) - lambda_max(st.Zs));
}

/// Coefficient of the quadratic off-block decay for one elimination step.
inline double decay_coefficient(double eta, double z0) {
  const double e2 = eta * eta;
  return (4.0 / 9.0) * e2 * e2 * z0 * z0 * z0 + (4.0 / 3.0) * e2 * eta * z0 * z0 +
         (13.0 / 3.0) * e2 * z0 + 4.0 * eta;
}

/// Thrown when the off-block is too large for an elimination step.
class PerturbationTooLarge : public DomainError {
 public:
  using DomainError::DomainError;
};

/// One elimination step: solve W Zx - Zs W = Zo, rotate by exp([0 -W^T; W 0]).
inline EliminationState eliminate_step(const EliminationState& st) {
  const Index r = st.r(), q = st.Zs.rows(), n = r + q;
  if (r == 0 || q == 0) {
    EliminationState out = st;
    ++out.ell;
    return out;
  }
  const double xmin = lambda_min(st.Zx), smax = lambda_max(st.Zs);
  if (!(xmin > 0.0) || !(smax < 0.0)) {
    std::ostringstream os;
    os << "eliminate_step: blocks lost definiteness (lambda_min(Zx) = " << xmin
       << ", lambda_max(Zs) = " << smax << ")";
    throw PerturbationTooLarge(os.str());
  }
  const double eta = std::sqrt(static_cast<double>(std::min(r, q))) / (xmin - smax);
  const double zo = norm2(st.Zo);
  if (zo > 0.75 / eta) {
    std::ostringstream os;
    os << "eliminate_step: perturbation too large, ||Zo||_2 = " << zo
       << " exceeds 3/(4 eta) = " << 0.75 / eta;
    throw PerturbationTooLarge(os.str());
  }

  const Matrix wo = sylvester_solve(st.Zx, st.Zs, st.Zo);
  Matrix w = Matrix::Zero(n, n);
  w.bottomLeftCorner(q, r) = wo;
  w.topRightCorner(r, q) = -wo.transpose();
  const Matrix rot = skew_exp(w);

  Matrix z = rot.transpose() * st.block() * rot;
  z = 0.5 * (z + z.transpose());
  EliminationState out;
  out.ell = st.ell + 1;
  out.z0_norm = st.z0_norm;
  const auto b = split_blocks(z, r);
  out.Zx = b.X;
  out.Zs = b.S;
  out.Zo = b.O;
  out.Y = st.Y * rot;
  const Matrix yx = out.Y.leftCols(r);
  out.V = yx * out.Zx * yx.transpose();
  out.V = 0.5 * (out.V + out.V.transpose());

  const double bound = decay_coefficient(eta, st.z0_norm) * zo * zo +
                       1e-13 * std::max(1.0, st.z0_norm);
  const double zo_new = norm2(out.Zo);
  if (zo_new > bound) {
    std::ostringstream os;
    os << "eliminate_step: off-block decay violated, ||Zo'||_2 = " << zo_new
       << " > " << bound;
    throw NumericalFailure(os.str());
  }
  return out;
}

struct EliminationResult {
  SymMat V;
  long iterations = 0;
  double final_off_norm = 0;
  /// ||Zo[l]||_2 for l = 0..iterations.
  std::vector<double> off_norms;
  /// eta_l for each executed step.
  std::vector<double> etas;
};

inline constexpr long kEliminationMaxIter = 60;

/// Pi(Z + H) by iterative elimination in the eigenbasis of Z.
inline EliminationResult run_elimination(const SymMat& z, const SymMat& h,
                                         long max_iter = kEliminationMaxIter) {
  if (z.n() != h.n()) throw DimensionMismatch("run_elimination: dimension mismatch");
  const SpectralDecomp d = eig_sym(z);
  const double lmax = d.n() ? d.lambda.cwiseAbs().maxCoeff() : 0.0;
  if (d.n() && !(d.lambda.cwiseAbs().minCoeff() > 1e-12 * lmax)) {
    std::ostringstream os;
    os << "run_elimination: reference matrix is singular (min |lambda| = "
       << d.lambda.cwiseAbs().minCoeff() << ")";
    throw DomainError(os.str());
  }
  Index r = 0;
  while (r < d.n() && d.lambda(r) > 0.0) ++r;
  const Matrix z0 =
      Matrix(d.lambda.asDiagonal()) + d.Q.transpose() * h.mat() * d.Q;

  EliminationState st = make_elimination_state(z0, r);
  EliminationResult res;
  const double stop = 1e-13 * std::max(1.0, (z + h).norm_fro());
  res.off_norms.push_back(norm2(st.Zo));
  while (st.Zo.norm() > stop) {
    if (st.ell >= max_iter) {
      std::ostringstream os;
      os << "run_elimination: no convergence in " << max_iter
         << " iterations; off-block history:";
      for (double v : res.off_norms) os << ' ' << v;
      throw NumericalFailure(os.str());
    }
    res.etas.push_back(elimination_eta(st));
    st = eliminate_step(st);
    res.off_norms.push_back(norm2(st.Zo));
  }
  if ((r > 0 && !(lambda_min(st.Zx) > 0.0)) ||
      (r < d.n() && !(lambda_max(st.Zs) < 0.0))) {
    throw PerturbationTooLarge("run_elimination: blocks not definite at the reference split");
  }
  res.iterations = st.ell;
  res.final_off_norm = st.Zo.norm();
  res.V = SymMat(d.Q * st.V * d.Q.transpose());
  return res;
}

/// Scan of the refined error bound. lhs and ho_norm use the spectral norm.
struct EbReport {
  std::vector<double> scales;
  std::vector<double> lhs;
  std::vector<double> ho_norms;
  std::vector<double> h_norms;
  std::vector<double> refined_ratios;
  std::vector<double> classic_ratios;

  void write_csv(std::ostream& out) const {
    out << "t,lhs,ho_norm,refined_ratio,classic_ratio\n";
    char buf[200];
    for (std::size_t i = 0; i < scales.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", scales[i], lhs[i],
                    ho_norms[i], refined_ratios[i], classic_ratios[i]);
      out << buf;
    }
  }

  nlohmann::json to_json() const {
    return {{"norm", "spectral"},
            {"t", scales},
            {"lhs", lhs},
            {"ho_norm", ho_norms},
            {"h_norm", h_norms},
            {"refined_ratio", refined_ratios},
            {"classic_ratio", classic_ratios}};
  }
};

/// Measures ||Pi(Z + H(t)) - Pi(Z) - Q(Omega o H~(t))Q^T||_2 along a
/// perturbation path, with Pi from the eigendecomposition. An off-diagonal
/// block at roundoff level counts as zero, and a ratio with a zero
/// denominator is reported as 0.
inline EbReport eb_scan(const SymMat& z, const std::function<SymMat(double)>& path,
                        const std::vector<double>& scales) {
  const SpectralDecomp d = eig_sym(z);
  const OmegaStructure os = build_omega(d);
  const SymMat pz = psd_split(d).pos;
  const double zn = d.lambda.cwiseAbs().maxCoeff();
  EbReport rep;
  for (double t : scales) {
    const SymMat ht = path(t);
    const double lhs = norm2(psd_project(z + ht) - pz - apply_omega(os, ht));
    double ho = norm2(split_blocks(os.to_local(ht), os.r).O);
    const double hn = norm2(ht);
    if (ho <= 64 * std::numeric_limits<double>::epsilon() * (zn + hn)) ho = 0;
    rep.scales.push_back(t);
    rep.lhs.push_back(lhs);
    rep.ho_norms.push_back(ho);
    rep.h_norms.push_back(hn);
    rep.refined_ratios.push_back(ho * hn > 0 ? lhs / (ho * hn) : 0.0);
    rep.classic_ratios.push_back(hn > 0 ? lhs / (hn * hn) : 0.0);
  }
  return rep;
}

inline EbReport eb_scan(const SymMat& z, const SymMat& h,
                        const std::vector<double>& scales) {
  return eb_scan(z, [&](double t) { return t * h; }, scales);
}

struct SylvesterDeviation {
  double deviation = 0;
  double bound = 0;
};

/// ||W0 - Theta0 o H_O||_2 for the first elimination step at a diagonal
/// reference, Theta0_ij = 1/(l_j - l_{r+i}), against
/// 2nd/(l_r - l_{r+1})^2 ||H_O||_2 (||H_X||_2 + ||H_S||_2).
inline SylvesterDeviation first_sylvester_deviation(const SymMat& z, const SymMat& h) {
  const Index n = z.n();
  if (h.n() != n) throw DimensionMismatch("first_sylvester_deviation: dimension mismatch");
  const Vector lam = z.mat().diagonal();
  if ((z.mat() - Matrix(lam.asDiagonal())).norm() != 0.0) {
    throw DomainError("first_sylvester_deviation: reference must be diagonal");
  }
  for (Index i = 0; i + 1 < n; ++i) {
    if (lam(i) < lam(i + 1)) {
      throw DomainError("first_sylvester_deviation: diagonal must be descending");
    }
  }
  Index r = 0;
  while (r < n && lam(r) > 0.0) ++r;
  if (r == 0 || r == n || lam(r) == 0.0) {
    throw DomainError("first_sylvester_deviation: need a nonsingular reference with both signs");
  }
  const Index q = n - r;
  const double dd = std::sqrt(static_cast<double>(std::min(r, q)));
  const double gap = lam(r - 1) - lam(r);
  const auto hb = split_blocks(h.mat(), r);
  const double hx = norm2(hb.X), hs = norm2(hb.S), ho = norm2(hb.O);
  const double nd = static_cast<double>(n) * dd;
  if (hx + hs > gap / (2.0 * nd)) {
    std::ostringstream os;
    os << "first_sylvester_deviation: ||H_X||_2 + ||H_S||_2 = " << hx + hs
       << " exceeds (l_r - l_{r+1})/(2 n d) = " << gap / (2.0 * nd);
    throw DomainError(os.str());
  }
  const Matrix zx = Matrix(lam.head(r).asDiagonal()) + hb.X;
  const Matrix zs = Matrix(lam.tail(q).asDiagonal()) + hb.S;
  const Matrix w0 = sylvester_solve(zx, zs, hb.O);
  Matrix theta0(q, r);
  for (Index i = 0; i < q; ++i)
    for (Index j = 0; j < r; ++j) theta0(i, j) = 1.0 / (lam(j) - lam(r + i));
  SylvesterDeviation out;
  out.deviation = norm2(w0 - theta0.cwiseProduct(hb.O));
  out.bound = 2.0 * nd / (gap * gap) * ho * (hx + hs);
  if (out.deviation > out.bound * (1.0 + 1e-10) + 1e-15 * std::max(1.0, ho)) {
    std::ostringstream os;
    os << "first_sylvester_deviation: deviation " << out.deviation
       << " exceeds the bound " << out.bound;
    throw NumericalFailure(os.str());
  }
  return out;
}

}  // namespace admmsdp
