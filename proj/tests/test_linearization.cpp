#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>

#include "admmsdp/admm.hpp"
#include "admmsdp/linearization.hpp"
#include "admmsdp/problem.hpp"
#include "admmsdp/random.hpp"

using namespace admmsdp;

namespace {

SymMat diag(std::initializer_list<double> v) {
  Vector d(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) d(i++) = x;
  return SymMat(Matrix(d.asDiagonal()));
}

// Every symmetric matrix as a constraint: P is the identity.
SdpProblem full_problem(Index n) {
  std::vector<SymMat> A;
  for (Index k = 0; k < svec_length(n); ++k) A.push_back(smat(Vector::Unit(svec_length(n), k)));
  return make_problem(SymMat::identity(n), std::move(A), Vector::Zero(svec_length(n)));
}

SdpProblem empty_problem(Index n) { return make_problem(SymMat::identity(n), {}, Vector(0)); }

// Dense matrix of a linear map in svec coordinates.
template <class F>
Matrix dense_operator(Index n, F&& f) {
  const Index t = svec_length(n);
  Matrix m(t, t);
  for (Index k = 0; k < t; ++k) m.col(k) = svec(f(smat(Vector::Unit(t, k))));
  return m;
}

double top_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

struct Planted {
  PlantedInstance inst;
  ConstraintKernel kernel;
  SymMat zstar;
  OmegaStructure os;

  Planted(Index n, Index m, Index r, std::uint64_t seed, Degeneracy deg = Degeneracy::none)
      : inst(generate_planted(n, m, r, seed, deg)),
        kernel(inst.problem),
        zstar(inst.certificate.Xstar - inst.certificate.Sstar),
        os(build_omega(eig_sym(zstar))) {}
};

Matrix off_block(const OmegaStructure& os, const SymMat& h) {
  return os.to_local(h).bottomLeftCorner(os.n - os.r, os.r);
}

}  // namespace

TEST(BuildOmega, TwoByTwo) {
  const auto os = build_omega(eig_sym(diag({2, -1})));
  EXPECT_EQ(os.r, 1);
  EXPECT_NEAR(os.Theta(0, 0), 2.0 / 3.0, 1e-15);
  Matrix expect(2, 2);
  expect << 1, 2.0 / 3.0, 2.0 / 3.0, 0;
  EXPECT_LE((os.Omega - expect).norm(), 1e-15);
  EXPECT_LE((os.Omega + os.OmegaPerp - Matrix::Ones(2, 2)).norm(), 0.0);
}

TEST(BuildOmega, RepeatedPositive) {
  const auto os = build_omega(eig_sym(diag({1, 1, -1})));
  EXPECT_EQ(os.r, 2);
  ASSERT_EQ(os.Theta.rows(), 1);
  EXPECT_NEAR(os.Theta(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(os.Theta(0, 1), 0.5, 1e-15);
}

TEST(BuildOmega, ThetaInUnitInterval) {
  Planted p(10, 20, 4, 1);
  EXPECT_EQ(p.os.r, 4);
  EXPECT_GT(p.os.Theta.minCoeff(), 0.0);
  EXPECT_LT(p.os.Theta.maxCoeff(), 1.0);
  EXPECT_EQ(p.os.Omega.topLeftCorner(4, 4), Matrix::Ones(4, 4));
  EXPECT_EQ(p.os.Omega.bottomRightCorner(6, 6), Matrix::Zero(6, 6));
}

TEST(BuildOmega, SingularIsRejected) {
  EXPECT_THROW(build_omega(eig_sym(diag({1, 0, -1}))), DomainError);
  EXPECT_FALSE(is_nonsingular_reference(eig_sym(diag({1, 1e-10, -1}))));
  EXPECT_TRUE(is_nonsingular_reference(eig_sym(diag({1, 1e-3, -1}))));
}

TEST(BuildOmega, FrechetDifferential) {
  Rng rng(2);
  const SymMat z = SymMat(rng.orthogonal(6) * Matrix(diag({2, 1.5, 0.7, -0.5, -1, -2}).mat()) *
                          rng.orthogonal(6).transpose());
  const SymMat zs(0.5 * (z.mat() + z.mat().transpose()));
  const auto d = eig_sym(zs);
  const auto os = build_omega(d);
  const SymMat h = rng.sym_gaussian(6);
  double prev = 0;
  for (double t : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const double err =
        norm2(psd_project(zs + t * h) - psd_project(zs) - t * apply_omega(os, h)) / t;
    if (prev > 0) {
      EXPECT_LE(err, 0.2 * prev);
    }
    prev = err;
  }
  EXPECT_LE(prev, 1e-4);
}

TEST(ApplyM, LinearAndFirmlyNonexpansive) {
  Planted p(8, 14, 3, 3);
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const SymMat h = rng.sym_gaussian(8), g = rng.sym_gaussian(8);
    const SymMat mh = apply_M(p.os, p.kernel, h);
    const SymMat lin = apply_M(p.os, p.kernel, 2.0 * h + g) - 2.0 * mh -
                       apply_M(p.os, p.kernel, g);
    EXPECT_LE(lin.norm_fro(), 1e-12 * (h.norm_fro() + g.norm_fro()));
    EXPECT_GE(inner(mh, h), inner(mh, mh) - 1e-10 * inner(h, h));
  }
}

TEST(ApplyM, FullRangeReducesToHadamard) {
  const SdpProblem full = full_problem(4);
  const ConstraintKernel k(full);
  const auto os = build_omega(eig_sym(diag({3, 1, -1, -2})));
  Rng rng(5);
  const SymMat h = rng.sym_gaussian(4);
  const SymMat expect(os.OmegaPerp.cwiseProduct(h.mat()));
  EXPECT_LE((apply_M(os, k, h) - expect).norm_fro(), 1e-12);
  EXPECT_NEAR(op_norm_M(os, k), 1.0, 1e-9);
}

TEST(ApplyM, AdjointProbe) {
  Planted p(8, 14, 3, 6);
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const SymMat h = rng.sym_gaussian(8), g = rng.sym_gaussian(8);
    EXPECT_LE(std::abs(inner(apply_M(p.os, p.kernel, h), g) -
                       inner(h, apply_M_adjoint(p.os, p.kernel, g))),
              1e-12 * h.norm_fro() * g.norm_fro());
  }
}

TEST(ApplyM, EnergyIdentities) {
  Planted p(9, 16, 4, 8);
  const auto& os = p.os;
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const SymMat h = rng.sym_gaussian(9);
    const SymMat a = apply_omega(os, h);
    const SymMat ap = h - a;
    const Matrix ho = off_block(os, h);
    const double cross = (os.Theta.cwiseProduct(ho)).cwiseProduct(os.ThetaPerp.cwiseProduct(ho)).sum();
    // Inner-product identity.
    EXPECT_NEAR(inner(a, ap), 2 * cross, 1e-12 * inner(h, h));
    EXPECT_GE(cross, 0.0);
    // Energy identity.
    const SymMat mh = apply_M(os, p.kernel, h);
    const double lhs = inner(h, h) - inner(mh, mh);
    const double rhs = std::pow(p.kernel.project_range(a).norm_fro(), 2) +
                       std::pow(p.kernel.project_null(ap).norm_fro(), 2) + 4 * cross;
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
    // Firm nonexpansiveness chain.
    EXPECT_LE(std::abs(inner(mh, h) - inner(mh, mh) - inner(ap, a)),
              1e-10 * inner(h, h));
  }
}

TEST(ApplyM, CrossTermVanishesWithoutOffBlock) {
  Planted p(7, 10, 3, 10);
  Rng rng(11);
  Matrix g = p.os.to_local(rng.sym_gaussian(7));
  g.bottomLeftCorner(4, 3).setZero();
  g.topRightCorner(3, 4).setZero();
  const SymMat h = p.os.from_local(g);
  const SymMat a = apply_omega(p.os, h);
  EXPECT_LE(std::abs(inner(a, h - a)), 1e-12 * inner(h, h));
  EXPECT_LE(off_block(p.os, h).norm(), 1e-10);
}

TEST(PsiResidual, LinearizationIdentity) {
  Planted p(10, 20, 4, 12);
  SolverConfig cfg;
  Rng rng(13);
  EXPECT_EQ(psi_residual(p.os, p.kernel, p.zstar, p.zstar).norm_fro(), 0.0);
  for (int t = 0; t < 50; ++t) {
    const SymMat h = (0.3 / (t + 1)) * rng.sym_gaussian(10);
    const SymMat z = p.zstar + h;
    const SymMat lhs = step_fixed_point(p.inst.problem, p.kernel, cfg, z) - p.zstar;
    const SymMat psi = psi_residual(p.os, p.kernel, z, p.zstar);
    const SymMat rhs = apply_M(p.os, p.kernel, h) + psi;
    EXPECT_LE((lhs - rhs).norm_fro(), 1e-10 * std::max(1.0, h.norm_fro()));
    const SymMat inner_term = psd_project(z) - psd_project(p.zstar) - apply_omega(p.os, h);
    EXPECT_NEAR(psi.norm_fro(), inner_term.norm_fro(), 1e-12);
  }
}

TEST(PsiResidual, ExactWithoutOffBlock) {
  Planted p(8, 12, 3, 14);
  const auto d = eig_sym(p.zstar);
  const double gap = std::min(d.lambda(2), -d.lambda(3));
  Rng rng(15);
  Matrix g = p.os.to_local(rng.sym_gaussian(8));
  g.bottomLeftCorner(5, 3).setZero();
  g.topRightCorner(3, 5).setZero();
  SymMat h = p.os.from_local(g);
  h = (0.9 * gap / norm2(h)) * h;
  EXPECT_LE(psi_residual(p.os, p.kernel, p.zstar + h, p.zstar).norm_fro(),
            1e-12 * std::max(1.0, h.norm_fro()) * 10);
}

TEST(OpNorm, NondegenerateBelowOneAndMatchesDense) {
  Planted p(8, 14, 3, 16);
  const FixSubspace fix = fix_basis(p.os, p.kernel);
  EXPECT_EQ(fix.dim(), 0);
  PowerIterationOptions opt;
  opt.tol = 1e-15;
  const double est = op_norm_M(p.os, p.kernel, opt);
  const double dense = top_singular_value(
      dense_operator(8, [&](const SymMat& h) { return apply_M(p.os, p.kernel, h); }));
  EXPECT_LT(est, 1.0);
  EXPECT_NEAR(est, dense, 1e-8);
  EXPECT_NEAR(op_norm_M_minus_fix(p.os, p.kernel, fix, opt), est, 1e-9);
}

TEST(OpNorm, PowerIterationCap) {
  Planted p(6, 8, 2, 17);
  PowerIterationOptions opt;
  opt.tol = 0;
  opt.max_iter = 5;
  try {
    op_norm_M(p.os, p.kernel, opt);
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_NE(std::string(e.what()).find("last estimates"), std::string::npos);
  }
}

TEST(FixBasis, DegenerateInstance) {
  Planted p(8, 14, 3, 18, Degeneracy::primal_nd_fail);
  const FixSubspace fix = fix_basis(p.os, p.kernel);
  ASSERT_GE(fix.dim(), 1);
  const SdpProblem& prob = p.inst.problem;
  for (Index i = 0; i < fix.dim(); ++i) {
    const SymMat& b = fix.basis[i];
    EXPECT_LE((apply_M(p.os, p.kernel, b) - b).norm_fro(), 1e-9);
    const Matrix g = p.os.to_local(b);
    EXPECT_LE(g.bottomLeftCorner(5, 3).norm(), 1e-9);
    Matrix bx = Matrix::Zero(8, 8), bs = Matrix::Zero(8, 8);
    bx.topLeftCorner(3, 3) = g.topLeftCorner(3, 3);
    bs.bottomRightCorner(5, 5) = g.bottomRightCorner(5, 5);
    EXPECT_LE(apply_A(prob, p.os.from_local(bx)).norm(), 1e-9);
    const SymMat sb = p.os.from_local(bs);
    EXPECT_LE(p.kernel.project_null(sb).norm_fro(), 1e-9);
    for (Index j = 0; j < fix.dim(); ++j) {
      EXPECT_NEAR(inner(b, fix.basis[j]), i == j ? 1.0 : 0.0, 1e-10);
    }
  }
  // Projector is idempotent and self-adjoint.
  Rng rng(19);
  const SymMat h = rng.sym_gaussian(8), g = rng.sym_gaussian(8);
  EXPECT_LE((fix.project(fix.project(h)) - fix.project(h)).norm_fro(), 1e-10);
  EXPECT_NEAR(inner(fix.project(h), g), inner(h, fix.project(g)), 1e-10);

  PowerIterationOptions opt;
  opt.tol = 1e-15;
  const double v = op_norm_M_minus_fix(p.os, p.kernel, fix, opt);
  const double dense = top_singular_value(dense_operator(8, [&](const SymMat& x) {
    return apply_M(p.os, p.kernel, x) - fix.project(x);
  }));
  EXPECT_LT(v, 1.0 - 1e-8);
  EXPECT_NEAR(v, dense, 1e-8);
  EXPECT_NEAR(op_norm_M(p.os, p.kernel, opt), 1.0, 1e-9);
  for (const auto& b : fix.basis) {
    EXPECT_LE((apply_M(p.os, p.kernel, b) - fix.project(b)).norm_fro(), 1e-9);
  }
}

TEST(FixBasis, NoConstraints) {
  const SdpProblem e = empty_problem(5);
  const ConstraintKernel k(e);
  const auto os = build_omega(eig_sym(diag({2, 1, 0.5, -1, -1.5})));
  const FixSubspace fix = fix_basis(os, k);
  EXPECT_EQ(fix.dim(), 6);
  EXPECT_EQ(fix.dim_x, 6);
}

TEST(DirectionalDerivative, BetaBlockCases) {
  const auto ds = build_directional(eig_sym(diag({1, 0, 0, -1})));
  ASSERT_EQ(ds.beta(), 2);
  Matrix g = Matrix::Zero(4, 4);
  g.block(1, 1, 2, 2) << 2, 1, 1, 2;
  EXPECT_LE((directional_derivative(ds, SymMat(g)) - SymMat(g)).norm_fro(), 1e-14);
  EXPECT_LE(directional_derivative(ds, SymMat(-g)).norm_fro(), 1e-14);
}

TEST(DirectionalDerivative, FiniteDifferenceAndHomogeneity) {
  const SymMat z = diag({1, 0, -1});
  const auto ds = build_directional(eig_sym(z));
  EXPECT_EQ(ds.r, 1);
  EXPECT_EQ(ds.s, 1);
  Rng rng(20);
  for (int trial = 0; trial < 5; ++trial) {
    const SymMat h = rng.sym_gaussian(3);
    const SymMat dh = directional_derivative(ds, h);
    double last = 0;
    for (double t : {1e-2, 1e-3, 1e-4, 1e-5}) {
      last = (psd_project(z + t * h) - psd_project(z) - t * dh).norm_fro() / t;
    }
    EXPECT_LE(last, 1e-4);
    EXPECT_LE((directional_derivative(ds, 3.0 * h) - 3.0 * dh).norm_fro(), 1e-12);
  }
}

TEST(DirectionalDerivative, EnergyIdentity) {
  // Singular reference: Z* = diag(2, 1, 0, 0, -1, -2) rotated.
  Rng rng(21);
  const Matrix q = rng.orthogonal(6);
  const Vector lam = (Vector(6) << 2, 1, 0, 0, -1, -2).finished();
  const SymMat z(q * lam.asDiagonal() * q.transpose());
  const auto ds = build_directional(eig_sym(z));
  ASSERT_EQ(ds.beta(), 2);
  const auto inst = generate_planted(6, 9, 2, 22);
  const ConstraintKernel k(inst.problem);
  for (int t = 0; t < 50; ++t) {
    const SymMat h = rng.sym_gaussian(6);
    const SymMat d = directional_derivative(ds, h);
    const SymMat mh = apply_M_tilde(ds, k, h);
    const Matrix g = ds.Qstar.transpose() * h.mat() * ds.Qstar;
    const Matrix hga = g.bottomLeftCorner(ds.s, ds.r);
    const Matrix tp = Matrix::Ones(ds.s, ds.r) - ds.ThetaTilde;
    const double cross = ds.ThetaTilde.cwiseProduct(hga).cwiseProduct(tp.cwiseProduct(hga)).sum();
    const double lhs = inner(h, h) - inner(mh, mh);
    const double rhs = std::pow(k.project_range(d).norm_fro(), 2) +
                       std::pow(k.project_null(h - d).norm_fro(), 2) + 4 * cross;
    EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs)));
    EXPECT_LE(mh.norm_fro(), h.norm_fro() + 1e-10);
  }
}

TEST(RhoEstimate, ReducesToOperatorNorm) {
  Planted p(6, 8, 2, 23);
  const auto ds = build_directional(eig_sym(p.zstar));
  EXPECT_EQ(ds.beta(), 0);
  PowerIterationOptions opt;
  opt.tol = 1e-15;
  const double nm = op_norm_M(p.os, p.kernel, opt);
  RhoOptions ro;
  ro.max_ascent = 50000;
  ro.tol = 1e-15;
  const auto est = rho_nd_estimate(ds, p.kernel, 3, 1, ro);
  EXPECT_EQ(est.samples, 3);
  EXPECT_NEAR(est.value, nm, 1e-6);
}

TEST(RhoEstimate, SingularReference) {
  Rng rng(24);
  const Matrix q = rng.orthogonal(5);
  const Vector lam = (Vector(5) << 1.5, 1, 0, -1, -1.2).finished();
  const auto ds = build_directional(eig_sym(SymMat(q * lam.asDiagonal() * q.transpose())));
  const auto inst = generate_planted(5, 6, 2, 25);
  const ConstraintKernel k(inst.problem);
  std::vector<SymMat> starts, doubled;
  for (int i = 0; i < 4; ++i) {
    starts.push_back(rng.sym_gaussian(5));
    doubled.push_back(2.0 * starts.back());
  }
  const auto a = rho_nd_estimate(ds, k, starts);
  const auto b = rho_nd_estimate(ds, k, doubled);
  EXPECT_LE(a.value, 1.0 + 1e-10);
  EXPECT_GT(a.value, 0.0);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  EXPECT_THROW(rho_nd_estimate(ds, k, 0, 1), DomainError);
}
