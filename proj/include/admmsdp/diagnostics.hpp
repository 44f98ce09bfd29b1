#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "admmsdp/admm.hpp"
#include "admmsdp/core_linalg.hpp"
#include "admmsdp/linearization.hpp"
#include "admmsdp/problem.hpp"

namespace admmsdp {

inline constexpr double kDefaultRankTau = 1e-8;

struct ComplementarityReport {
  Index n = 0;
  Index r = 0;
  Index s = 0;
  double lam_min_absZ = 0;
  double eigengap = 0;
  bool sc_holds = false;
};

/// Ranks of Pi(Z*) and Pi(-Z*) with cutoff tau * max(1, max|lambda|).
inline ComplementarityReport sc_check(const SpectralDecomp& d,
                                      double tau = kDefaultRankTau) {
  ComplementarityReport rep;
  rep.n = d.n();
  if (rep.n == 0) return rep;
  const double thr = tau * std::max(1.0, d.lambda.cwiseAbs().maxCoeff());
  double min_pos = std::numeric_limits<double>::infinity();
  double min_neg = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < rep.n; ++i) {
    const double l = d.lambda(i);
    if (l > thr) {
      ++rep.r;
      min_pos = std::min(min_pos, l);
    } else if (l < -thr) {
      ++rep.s;
      min_neg = std::min(min_neg, -l);
    }
  }
  rep.lam_min_absZ = d.lambda.cwiseAbs().minCoeff();
  const double g = std::min(min_pos, min_neg);
  rep.eigengap = std::isfinite(g) ? g : 0.0;
  rep.sc_holds = rep.r + rep.s == rep.n;
  return rep;
}

inline ComplementarityReport sc_check(const SymMat& zstar, double tau = kDefaultRankTau) {
  return sc_check(eig_sym(zstar), tau);
}

struct NondegeneracyReport {
  Index rank_W1 = 0;
  Index rank_W2 = 0;
  Index rank_joint = 0;
  Index dual_rank_W1 = 0;
  Index dual_rank_W2 = 0;
  Index dual_rank_joint = 0;
  bool primal_nd = false;
  bool dual_nd = false;
};

/// Numerical rank at threshold tau * sigma_max.
inline Index numerical_rank(const Matrix& a, double tau) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  Index k = 0;
  while (k < sv.size() && sv(k) > tau * sv(0)) ++k;
  return k;
}

/// Columns svec(Q (E_ij + E_ji)/sqrt2 Q^T) (E_ii on the diagonal) over the
/// index block [off, off + k).
inline Matrix block_svec_basis(const Matrix& q, Index off, Index k) {
  const Index n = q.rows();
  Matrix out(svec_length(n), svec_length(k));
  const Matrix qb = q.middleCols(off, k);
  Index c = 0;
  for (Index j = 0; j < k; ++j) {
    for (Index i = j; i < k; ++i) {
      Matrix e;
      if (i == j) {
        e = qb.col(i) * qb.col(i).transpose();
      } else {
        e = (qb.col(i) * qb.col(j).transpose() + qb.col(j) * qb.col(i).transpose()) /
            M_SQRT2;
      }
      out.col(c++) = svec(SymMat(e));
    }
  }
  return out;
}

/// Rank test for N_X* cap R(A*) = {0} and N_S* cap N(A) = {0}.
inline NondegeneracyReport nd_check(const ConstraintKernel& kernel,
                                    const SpectralDecomp& d,
                                    double tau = kDefaultRankTau) {
  if (d.n() != kernel.n()) throw DimensionMismatch("nd_check: dimension mismatch");
  const Index n = d.n();
  const auto sc = sc_check(d, tau);
  NondegeneracyReport rep;
  auto ranks = [&](const Matrix& w1, const Matrix& w2, Index& r1, Index& r2, Index& rj) {
    r1 = numerical_rank(w1, tau);
    r2 = numerical_rank(w2, tau);
    Matrix joint(svec_length(n), w1.cols() + w2.cols());
    joint << w1, w2;
    rj = numerical_rank(joint, tau);
  };

  const Matrix& w1 = kernel.svec_columns();
  const Matrix w2 = block_svec_basis(d.Q, sc.r, n - sc.r);
  ranks(w1, w2, rep.rank_W1, rep.rank_W2, rep.rank_joint);
  rep.primal_nd = rep.rank_W1 + rep.rank_W2 == rep.rank_joint;

  // Orthonormal basis of N(A) in svec coordinates.
  Matrix nullA;
  if (kernel.m() == 0) {
    nullA = Matrix::Identity(svec_length(n), svec_length(n));
  } else {
    Eigen::HouseholderQR<Matrix> qr(kernel.basis());
    const Matrix full = qr.householderQ() * Matrix::Identity(svec_length(n), svec_length(n));
    nullA = full.rightCols(svec_length(n) - kernel.m());
  }
  const Matrix v2 = block_svec_basis(d.Q, 0, n - sc.s);
  ranks(nullA, v2, rep.dual_rank_W1, rep.dual_rank_W2, rep.dual_rank_joint);
  rep.dual_nd = rep.dual_rank_W1 + rep.dual_rank_W2 == rep.dual_rank_joint;
  return rep;
}

inline NondegeneracyReport nd_check(const SdpProblem& p, const SpectralDecomp& d,
                                    double tau = kDefaultRankTau) {
  return nd_check(ConstraintKernel(p), d, tau);
}

struct FaceNorms {
  /// ||Pi_{T_S*}(X)||_F: X outside the leading r block.
  double face_X = 0;
  /// ||Pi_{T_X*}(sigma S)||_F: sigma S outside the trailing s block.
  double face_S = 0;
  /// ||H_O||_F with H = (X - sigma S) - Z*.
  double ho = 0;
};

/// Tangent-space projection that zeroes the diagonal block [off, off+k) in
/// Q coordinates.
inline SymMat remove_block(const Matrix& q, const SymMat& a, Index off, Index k) {
  Matrix g = q.transpose() * a.mat() * q;
  g.block(off, off, k, k).setZero();
  return SymMat(q * g * q.transpose());
}

/// Face projections relative to Z* = Q diag(lambda) Q^T. The ranks r and s
/// come from the spectrum at cutoff tau. When r + s < n the zero-eigenvalue
/// block goes with the negative block for X and with the positive block for
/// sigma S, so mass there counts against both.
inline FaceNorms face_projections(const SpectralDecomp& d, const SymMat& x,
                                  const SymMat& s, double sigma,
                                  double tau = kDefaultRankTau) {
  const auto sc = sc_check(d, tau);
  const Index n = d.n();
  FaceNorms f;
  const Matrix gx = d.Q.transpose() * x.mat() * d.Q;
  const Matrix gs = sigma * (d.Q.transpose() * s.mat() * d.Q);
  Matrix tx = gx;
  tx.topLeftCorner(sc.r, sc.r).setZero();
  f.face_X = tx.norm();
  Matrix ts = gs;
  ts.bottomRightCorner(sc.s, sc.s).setZero();
  f.face_S = ts.norm();
  const Matrix h = gx - gs - Matrix(d.lambda.asDiagonal());
  f.ho = h.bottomLeftCorner(n - sc.r, sc.r).norm();
  return f;
}

/// First k from which rank_X and rank_S stay at (r, s), or none.
inline std::optional<long> rank_trace(const std::vector<IterationRecord>& records,
                                      const ComplementarityReport& final_report) {
  if (records.size() < 2) return std::nullopt;
  auto match = [&](const IterationRecord& rec) {
    return rec.rank_X == final_report.r && rec.rank_S == final_report.s;
  };
  std::size_t j = records.size();
  while (j > 0 && match(records[j - 1])) --j;
  if (j == records.size()) return std::nullopt;
  return records[j].k;
}

struct RateFit {
  std::string sequence_name;
  long window_start = 0;
  long window_end = 0;
  double rho_hat = 1.0;
  double r2 = 1.0;
};

/// Least-squares fit of log(values) over the trailing `window` entries.
/// rho_hat = exp(slope); indices in the window are taken as consecutive.
inline RateFit rate_fit(const std::vector<double>& values, long window,
                        const std::string& name = "", long index_offset = 0) {
  if (window < 10) throw DomainError("rate_fit: window must be at least 10");
  if (static_cast<long>(values.size()) < window) {
    throw DomainError("rate_fit: fewer values than the window length");
  }
  const long end = static_cast<long>(values.size());
  const long start = end - window;
  double sx = 0, sy = 0;
  for (long i = start; i < end; ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw DomainError("rate_fit: values in the window must be positive and finite");
    }
    sx += i;
    sy += std::log(values[i]);
  }
  const double mx = sx / window, my = sy / window;
  double sxx = 0, sxy = 0, syy = 0;
  for (long i = start; i < end; ++i) {
    const double dx = i - mx, dy = std::log(values[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  RateFit fit;
  fit.sequence_name = name;
  fit.window_start = index_offset + start;
  fit.window_end = index_offset + end - 1;
  fit.rho_hat = std::exp(slope);
  const double ssres = std::max(0.0, syy - slope * sxy);
  fit.r2 = syy > 0 ? 1.0 - ssres / syy : 1.0;
  return fit;
}

struct BackwardErrorTerm {
  std::string name;
  double value = 0;
};

/// Right-hand side of the regularized backward error for the scaled KKT
/// system, with X~ = A^dagger b.
inline std::vector<BackwardErrorTerm> backward_error_terms(
    const SdpProblem& p, const ConstraintKernel& kernel, const SpectralDecomp& d,
    const SymMat& x, const SymMat& s, double sigma, double tau = kDefaultRankTau) {
  const SymMat& xt = kernel.pinv_b();
  const SymMat ss = sigma * s;
  const SymMat sc = sigma * p.C;
  const FaceNorms f = face_projections(d, x, s, sigma, tau);
  return {
      {"primal_range", kernel.project_range(x - xt).norm_fro()},
      {"dual_null", kernel.project_null(ss - sc).norm_fro()},
      {"gap", std::abs(inner(x, sc) + inner(xt, ss) - inner(xt, sc))},
      {"neg_eig_X", std::max(0.0, -lambda_min(x.mat()))},
      {"neg_eig_S", std::max(0.0, -lambda_min(ss.mat()))},
      {"face_X", f.face_X},
      {"face_S", f.face_S},
  };
}

/// Per-iterate distances to the final iterate, from a deterministic replay.
struct RunAnalysis {
  std::vector<double> norm_H;
  std::vector<double> norm_HO;
  std::vector<double> face_X;
  std::vector<double> face_S;
  std::vector<double> r_max;
  std::vector<long> rank_X;
  std::vector<long> rank_S;
  /// ||Z^(K+1) - Z^(K)|| at the final iterate.
  double final_step = 0;
};

/// Replays a run with the same configuration and measures each iterate
/// against the reference decomposition (normally the final iterate).
inline RunAnalysis replay_analysis(const SdpProblem& p, const ConstraintKernel& kernel,
                                   const SolverConfig& cfg, const SymMat& zref,
                                   long last_k) {
  const SpectralDecomp dref = eig_sym(zref);
  const auto sc = sc_check(dref, cfg.rank_tau);
  RunAnalysis a;
  SolverConfig c = cfg;
  c.max_iter = last_k;
  c.time_limit_secs.reset();
  c.trace_every = 1;
  const auto res = solve(p, kernel, c, [&](long, const SymMat& z, const SpectralDecomp& d) {
    const Matrix g = dref.Q.transpose() * (z - zref).mat() * dref.Q;
    a.norm_H.push_back(g.norm());
    a.norm_HO.push_back(g.bottomLeftCorner(p.n - sc.r, sc.r).norm());
    const auto split = psd_split(d);
    const FaceNorms f =
        face_projections(dref, split.pos, (1.0 / cfg.sigma) * split.neg, cfg.sigma,
                         cfg.rank_tau);
    a.face_X.push_back(f.face_X);
    a.face_S.push_back(f.face_S);
  });
  for (const auto& r : res.records) {
    a.r_max.push_back(r.r_max);
    a.rank_X.push_back(r.rank_X);
    a.rank_S.push_back(r.rank_S);
  }
  if (!res.records.empty()) a.final_step = res.records.back().norm_Z_diff;
  return a;
}

/// Fit over the trailing `fraction` of the post-identification segment
/// [k_start, K], after dropping tail points below `floor` (where the final
/// iterate no longer resolves the distance to the limit).
inline std::optional<RateFit> tail_rate_fit(const std::vector<double>& values,
                                            long k_start, double floor,
                                            const std::string& name,
                                            double fraction = 0.3) {
  long end = static_cast<long>(values.size());
  while (end > k_start && !(values[end - 1] > floor)) --end;
  if (end - k_start < 10) return std::nullopt;
  const long len = end - k_start;
  const long window = std::max(10L, static_cast<long>(std::ceil(fraction * len)));
  std::vector<double> seg(values.begin() + k_start, values.begin() + end);
  for (double v : seg)
    if (!(v > 0.0)) return std::nullopt;
  return rate_fit(seg, window, name, k_start);
}

/// Relative size of the noise floor for tail fits, in units of the last step.
inline constexpr double kTailFloorFactor = 1e4;

}  // namespace admmsdp
