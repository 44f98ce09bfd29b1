// Solve a small planted SDP and look at the local rate structure at the limit.

#include <cstdio>

#include "admmsdp/admm.hpp"
#include "admmsdp/diagnostics.hpp"
#include "admmsdp/linearization.hpp"
#include "admmsdp/problem.hpp"

using namespace admmsdp;

int main() {
  const auto inst = generate_planted(12, 24, 3, 7);
  const SdpProblem& p = inst.problem;
  const ConstraintKernel kernel(p);

  SolverConfig cfg;
  cfg.sigma = 1.0;
  const SolveResult res = solve(p, kernel, cfg);
  std::printf("%s after %ld iterations, r_max = %.2e, <C,X> = %.10f\n", to_string(res.status),
              res.iterations, res.state.residuals.r_max, inner(p.C, res.state.X));

  const SpectralDecomp& d = res.state.decomp;
  const auto sc = sc_check(d);
  const auto nd = nd_check(kernel, d);
  std::printf("rank X = %ld, rank S = %ld, SC %s, primal ND %s, dual ND %s\n",
              static_cast<long>(sc.r), static_cast<long>(sc.s), sc.sc_holds ? "yes" : "no",
              nd.primal_nd ? "yes" : "no", nd.dual_nd ? "yes" : "no");

  if (sc.sc_holds) {
    const OmegaStructure os = build_omega(d);
    std::printf("||M|| = %.6f\n", op_norm_M(os, kernel));
  }

  if (const auto kid = rank_trace(res.records, sc)) {
    std::printf("ranks settle from k = %ld\n", *kid);
  }
  std::vector<double> rmax;
  for (const auto& r : res.records) rmax.push_back(r.r_max);
  if (auto fit = tail_rate_fit(rmax, 0, 0.0, "r_max")) {
    std::printf("observed rate of r_max: %.4f\n", fit->rho_hat);
  }
  return res.status == SolveStatus::converged ? 0 : 1;
}
