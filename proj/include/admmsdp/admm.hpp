#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "admmsdp/core_linalg.hpp"
#include "admmsdp/problem.hpp"
#include "admmsdp/random.hpp"

namespace admmsdp {

enum class InitKind { zero, gaussian, explicit_z };

struct SolverConfig {
  double sigma = 1.0;
  long max_iter = 200000;
  double tol_rmax = 1e-10;
  std::optional<double> time_limit_secs;
  /// Record every trace_every-th iterate (the last one is always recorded).
  long trace_every = 1;
  InitKind init = InitKind::gaussian;
  std::uint64_t seed = 0;
  std::optional<SymMat> Z0;
  /// Relative eigenvalue cutoff for numerical ranks.
  double rank_tau = 1e-8;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw DomainError("SolverConfig: sigma must be positive and finite");
    }
    if (!(tol_rmax > 0.0)) throw DomainError("SolverConfig: tol_rmax must be positive");
    if (max_iter < 0) throw DomainError("SolverConfig: max_iter must be nonnegative");
    if (trace_every < 1) throw DomainError("SolverConfig: trace_every must be >= 1");
    if (time_limit_secs && !(*time_limit_secs > 0.0)) {
      throw DomainError("SolverConfig: time limit must be positive");
    }
    if (init == InitKind::explicit_z && !Z0) {
      throw DomainError("SolverConfig: explicit initialization without Z0");
    }
    if (!(rank_tau > 0.0)) throw DomainError("SolverConfig: rank_tau must be positive");
  }
};

struct Residuals {
  double r_p = 0;
  double r_d = 0;
  double r_gap = 0;
  double r_max = 0;

  bool finite() const {
    return std::isfinite(r_p) && std::isfinite(r_d) && std::isfinite(r_gap);
  }
};

struct IterationRecord {
  long k = 0;
  double r_p = 0;
  double r_d = 0;
  double r_gap = 0;
  double r_max = 0;
  long rank_X = 0;
  long rank_S = 0;
  double lam_min_absZ = 0;
  /// ||Z^(k+1) - Z^(k)||_F
  double norm_Z_diff = 0;
  // Filled by post-hoc analysis against a reference limit.
  std::optional<double> norm_H;
  std::optional<double> norm_HO;
  std::optional<double> face_X;
  std::optional<double> face_S;
};

struct SolverState {
  long k = 0;
  SymMat Z;
  SymMat X;
  Vector y;
  SymMat S;
  Residuals residuals;
  SpectralDecomp decomp;
};

enum class SolveStatus { converged, iter_limit, time_limit, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iter_limit: return "iter_limit";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct SolveResult {
  SolverState state;
  std::vector<IterationRecord> records;
  SolveStatus status = SolveStatus::iter_limit;
  /// Number of fixed-point steps taken.
  long iterations = 0;
  double wall_time_secs = 0;
  std::string message;
};

/// Called for every iterate k with Z^(k) and its decomposition.
using IterateObserver =
    std::function<void(long k, const SymMat& Z, const SpectralDecomp& decomp)>;

inline Residuals residuals(const SdpProblem& p, const SymMat& X, const Vector& y,
                           const SymMat& S) {
  check_dim(p, X, "residuals");
  check_dim(p, S, "residuals");
  Residuals r;
  r.r_p = (apply_A(p, X) - p.b).norm() / (1.0 + p.b.norm());
  r.r_d = (apply_At(p, y) + S - p.C).norm_fro() / (1.0 + p.C.norm_fro());
  const double pobj = inner(p.C, X);
  const double dobj = p.b.dot(y);
  r.r_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  r.r_max = std::max({r.r_p, r.r_d, r.r_gap});
  return r;
}

/// y = (AA*)^{-1}(b/sigma - A(X/sigma + S - C)).
inline Vector recover_y(const SdpProblem& p, const ConstraintKernel& kernel,
                        double sigma, const SymMat& X, const SymMat& S) {
  return kernel.gram_solve(p.b / sigma - apply_A(p, (1.0 / sigma) * X + S - p.C));
}

/// Z^+ from a precomputed decomposition of Z.
inline SymMat step_from_decomp(const SdpProblem& p, const ConstraintKernel& kernel,
                               double sigma, const SymMat& Z,
                               const SpectralDecomp& d) {
  const SymMat x = psd_split(d).pos;
  return kernel.project_range(Z - 2.0 * x) + x + kernel.pinv_b() +
         sigma * kernel.project_range(p.C) - sigma * p.C;
}

/// One-step fixed-point map
/// Z^+ = P(-2 Pi(Z) + Z) + Pi(Z) + A^dagger b + sigma P(C) - sigma C.
inline SymMat step_fixed_point(const SdpProblem& p, const ConstraintKernel& kernel,
                               const SolverConfig& cfg, const SymMat& Z) {
  check_dim(p, Z, "step_fixed_point");
  return step_from_decomp(p, kernel, cfg.sigma, Z, eig_sym(Z));
}

struct ThreeStepOutput {
  Vector y;
  SymMat S;
  SymMat X;
};

/// Classical three-step update: y, then S, then X.
inline ThreeStepOutput step_three(const SdpProblem& p, const ConstraintKernel& kernel,
                                  const SolverConfig& cfg, const SymMat& X,
                                  const SymMat& S) {
  check_dim(p, X, "step_three");
  check_dim(p, S, "step_three");
  const double sigma = cfg.sigma;
  ThreeStepOutput out;
  out.y = recover_y(p, kernel, sigma, X, S);
  const SymMat aty = apply_At(p, out.y);
  out.S = psd_project(p.C - aty - (1.0 / sigma) * X);
  out.X = X + sigma * (out.S + aty - p.C);
  return out;
}

/// X = Pi(Z), S = Pi(-Z)/sigma, y from the dual update.
inline SolverState extract_state(const SdpProblem& p, const ConstraintKernel& kernel,
                                 double sigma, long k, SymMat Z, SpectralDecomp d) {
  SolverState st;
  st.k = k;
  auto split = psd_split(d);
  st.X = std::move(split.pos);
  st.S = (1.0 / sigma) * split.neg;
  st.y = recover_y(p, kernel, sigma, st.X, st.S);
  st.residuals = residuals(p, st.X, st.y, st.S);
  st.Z = std::move(Z);
  st.decomp = std::move(d);
  return st;
}

inline SolverState extract_state(const SdpProblem& p, const ConstraintKernel& kernel,
                                 double sigma, long k, const SymMat& Z) {
  return extract_state(p, kernel, sigma, k, Z, eig_sym(Z));
}

/// Numerical ranks of Pi(Z) and Pi(-Z): eigenvalues beyond tau * max(1, max|lambda|).
inline std::pair<long, long> split_ranks(const Vector& lambda, double tau) {
  const double scale = std::max(1.0, lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0);
  long rx = 0, rs = 0;
  for (Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) > tau * scale) ++rx;
    if (-lambda(i) > tau * scale) ++rs;
  }
  return {rx, rs};
}

inline SymMat initial_iterate(const SdpProblem& p, const SolverConfig& cfg) {
  switch (cfg.init) {
    case InitKind::zero:
      return SymMat::zero(p.n);
    case InitKind::gaussian: {
      Rng rng(cfg.seed);
      return rng.sym_gaussian(p.n);
    }
    case InitKind::explicit_z:
      check_dim(p, *cfg.Z0, "initial iterate");
      return *cfg.Z0;
  }
  return SymMat::zero(p.n);
}

/// Runs the one-step iteration until r_max <= tol, the iteration or time
/// budget is exhausted, or the iterates stop being finite.
inline SolveResult solve(const SdpProblem& p, const ConstraintKernel& kernel,
                         const SolverConfig& cfg,
                         const IterateObserver& observer = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const double sigma = cfg.sigma;
  const SymMat shift =
      kernel.pinv_b() + sigma * kernel.project_range(p.C) - sigma * p.C;

  SolveResult res;
  SymMat Z = initial_iterate(p, cfg);
  long k = 0;
  try {
    SpectralDecomp d = eig_sym(Z);
    for (;;) {
      if (observer) observer(k, Z, d);
      const PsdSplit split = psd_split(d);
      const SymMat S = (1.0 / sigma) * split.neg;
      const Vector y = recover_y(p, kernel, sigma, split.pos, S);
      const Residuals r = residuals(p, split.pos, y, S);
      if (!r.finite()) {
        res.status = SolveStatus::numerical_failure;
        res.message = "non-finite residuals";
        break;
      }
      SymMat Znext = kernel.project_range(Z - 2.0 * split.pos) + split.pos + shift;
      const double diff = (Znext - Z).norm_fro();

      std::optional<SolveStatus> stop;
      if (r.r_max <= cfg.tol_rmax) {
        stop = SolveStatus::converged;
      } else if (k >= cfg.max_iter) {
        stop = SolveStatus::iter_limit;
      } else if (cfg.time_limit_secs && elapsed() >= *cfg.time_limit_secs) {
        stop = SolveStatus::time_limit;
      }

      if (stop || k % cfg.trace_every == 0) {
        IterationRecord rec;
        rec.k = k;
        rec.r_p = r.r_p;
        rec.r_d = r.r_d;
        rec.r_gap = r.r_gap;
        rec.r_max = r.r_max;
        const auto [rx, rs] = split_ranks(d.lambda, cfg.rank_tau);
        rec.rank_X = rx;
        rec.rank_S = rs;
        rec.lam_min_absZ = d.lambda.size() ? d.lambda.cwiseAbs().minCoeff() : 0.0;
        rec.norm_Z_diff = diff;
        res.records.push_back(rec);
      }
      if (stop) {
        res.status = *stop;
        res.state.k = k;
        res.state.Z = Z;
        res.state.X = split.pos;
        res.state.S = S;
        res.state.y = y;
        res.state.residuals = r;
        res.state.decomp = std::move(d);
        break;
      }
      Z = std::move(Znext);
      d = eig_sym(Z);
      ++k;
    }
  } catch (const NumericalFailure& e) {
    res.status = SolveStatus::numerical_failure;
    res.message = e.what();
  }
  if (res.status == SolveStatus::numerical_failure && res.state.Z.n() == 0) {
    // Report the last finite iterate.
    res.state.k = k;
    res.state.Z = Z;
    try {
      res.state = extract_state(p, kernel, sigma, k, Z);
    } catch (const std::exception&) {
    }
  }
  res.iterations = k;
  res.wall_time_secs = elapsed();
  return res;
}

inline SolveResult solve(const SdpProblem& p, const SolverConfig& cfg,
                         const IterateObserver& observer = nullptr) {
  ConstraintKernel kernel(p);
  return solve(p, kernel, cfg, observer);
}

struct ZDifference {
  double lhs = 0;
  double rhs = 0;
  double gap = 0;
};

/// Absolute scale below which the relative gap is measured against a floor
/// instead of the (roundoff-dominated) sides themselves.
inline constexpr double kZDiffFloor = 1e-4;

/// ||Z^+ - Z||^2 versus ||P(X - Xt)||^2 + sigma^2 ||P_perp(S - C)||^2, Xt = A^dagger b.
inline ZDifference z_difference_identity(const SdpProblem& p,
                                         const ConstraintKernel& kernel,
                                         const SolverConfig& cfg,
                                         const SolverState& state) {
  const SymMat zplus = step_from_decomp(p, kernel, cfg.sigma, state.Z, state.decomp);
  ZDifference out;
  out.lhs = (zplus - state.Z).norm_fro();
  out.lhs *= out.lhs;
  const double a = kernel.project_range(state.X - kernel.pinv_b()).norm_fro();
  const double b = cfg.sigma * kernel.project_null(state.S - p.C).norm_fro();
  out.rhs = a * a + b * b;
  const double floor = kZDiffFloor * std::max(1.0, state.Z.norm_fro());
  out.gap = std::abs(out.lhs - out.rhs) / std::max({out.lhs, out.rhs, floor * floor});
  return out;
}

}  // namespace admmsdp
