#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "admmsdp/error_bound.hpp"
#include "admmsdp/linearization.hpp"
#include "admmsdp/random.hpp"

using namespace admmsdp;

namespace {

// Q diag(lambda) Q^T with r eigenvalues in [lo, hi] and the rest in [-hi, -lo].
SymMat random_reference(Rng& rng, Index n, Index r, double lo = 0.5, double hi = 2.0) {
  const Matrix q = rng.orthogonal(n);
  Vector lam(n);
  for (Index i = 0; i < n; ++i) {
    const double v = rng.uniform(lo, hi);
    lam(i) = i < r ? v : -v;
  }
  return SymMat(q * lam.asDiagonal() * q.transpose());
}

Vector sorted_eigs(const Matrix& a) {
  return eig_sym(SymMat(a)).lambda;
}

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += std::pow(std::log(x[i]) - mx, 2);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

}  // namespace

TEST(EliminateStep, ZeroOffBlock) {
  Matrix z0 = Matrix::Zero(3, 3);
  z0.diagonal() << 2, 1, -1;
  const auto st = make_elimination_state(z0, 2);
  const auto next = eliminate_step(st);
  EXPECT_EQ(next.ell, 1);
  EXPECT_EQ(next.block(), st.block());
  EXPECT_EQ(next.Y, Matrix::Identity(3, 3));
}

TEST(EliminateStep, ScalarBlocks) {
  Matrix z0(2, 2);
  z0 << 2, 0.1, 0.1, -3;
  const auto st = make_elimination_state(z0, 1);
  const double w = 0.1 / 5.0;
  EXPECT_NEAR(sylvester_solve(st.Zx, st.Zs, st.Zo)(0, 0), 0.02, 1e-15);
  // Rotation exp([0 -w; w 0]) applied by hand.
  Matrix rot(2, 2);
  rot << std::cos(w), -std::sin(w), std::sin(w), std::cos(w);
  const Matrix expect = rot.transpose() * z0 * rot;
  const auto next = eliminate_step(st);
  EXPECT_LE((next.block() - expect).norm(), 1e-14);
  EXPECT_LT(std::abs(next.Zo(0, 0)), 1e-3);
  EXPECT_GT(std::abs(next.Zo(0, 0)), 1e-5);
}

TEST(EliminateStep, QuadraticDecay) {
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    Matrix z0 = Matrix::Zero(6, 6);
    for (Index i = 0; i < 3; ++i) z0(i, i) = rng.uniform(0.5, 2.0);
    for (Index i = 3; i < 6; ++i) z0(i, i) = -rng.uniform(0.5, 2.0);
    z0 += 0.05 * rng.sym_gaussian(6).mat();
    Matrix o = rng.gaussian(3, 3);
    o *= 1e-2 / norm2(o);
    z0.bottomLeftCorner(3, 3) = o;
    z0.topRightCorner(3, 3) = o.transpose();
    const auto st = make_elimination_state(z0, 3);
    const double kappa = decay_coefficient(elimination_eta(st), st.z0_norm);
    const auto next = eliminate_step(st);
    EXPECT_LE(norm2(next.Zo), kappa * 1e-4);
  }
}

TEST(EliminateStep, RefusesLargePerturbation) {
  Matrix z0(2, 2);
  z0 << 1, 5, 5, -1;
  EXPECT_THROW(eliminate_step(make_elimination_state(z0, 1)), PerturbationTooLarge);
  Matrix indefinite = Matrix::Zero(3, 3);
  indefinite.diagonal() << 1, -0.5, -1;
  EXPECT_THROW(eliminate_step(make_elimination_state(indefinite, 2)), PerturbationTooLarge);
}

TEST(EliminateStep, RunInvariants) {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    Matrix z0 = Matrix::Zero(8, 8);
    for (Index i = 0; i < 4; ++i) z0(i, i) = rng.uniform(0.5, 2.0);
    for (Index i = 4; i < 8; ++i) z0(i, i) = -rng.uniform(0.5, 2.0);
    z0 += 0.05 * rng.sym_gaussian(8).mat();
    const Vector eigs0 = sorted_eigs(z0);
    auto st = make_elimination_state(z0, 4);
    const double eta0 = elimination_eta(st);
    double prev = norm2(st.Zo);
    for (int l = 0; l < 4 && st.Zo.norm() > 1e-15; ++l) {
      st = eliminate_step(st);
      EXPECT_GT(lambda_min(st.Zx), 0.0);
      EXPECT_LT(lambda_max(st.Zs), 0.0);
      EXPECT_LE((st.Y.transpose() * st.Y - Matrix::Identity(8, 8)).norm(), 1e-10);
      EXPECT_LE((st.Y.transpose() * z0 * st.Y - st.block()).norm(), 1e-9);
      EXPECT_LE((sorted_eigs(st.block()) - eigs0).norm(), 1e-10);
      const double eta = elimination_eta(st);
      EXPECT_GE(eta, 2 * eta0 / 3);
      EXPECT_LE(eta, 2 * eta0);
      const double cur = norm2(st.Zo);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(RunElimination, ZeroPerturbation) {
  Rng rng(3);
  const SymMat z = random_reference(rng, 6, 2);
  const auto res = run_elimination(z, SymMat::zero(6));
  EXPECT_EQ(res.iterations, 0);
  EXPECT_LE((res.V - psd_project(z)).norm_fro(), 1e-12);
}

TEST(RunElimination, BlockDiagonalPerturbation) {
  Rng rng(4);
  const SymMat z = random_reference(rng, 7, 3);
  const auto os = build_omega(eig_sym(z));
  Matrix g = os.to_local(rng.sym_gaussian(7));
  g.bottomLeftCorner(4, 3).setZero();
  g.topRightCorner(3, 4).setZero();
  const SymMat h = os.from_local(0.05 * g);
  const auto res = run_elimination(z, h);
  EXPECT_LE(res.iterations, 1);
  EXPECT_LE((res.V - psd_project(z + h)).norm_fro(), 1e-9);
}

TEST(RunElimination, AgreesWithEigendecomposition) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Index n = 4 + t % 9;
    const Index r = 1 + t % (n - 1);
    const SymMat z = random_reference(rng, n, r);
    SymMat h = rng.sym_gaussian(n);
    h = (0.05 / norm2(h)) * h;
    const auto res = run_elimination(z, h);
    EXPECT_LE((res.V - psd_project(z + h)).norm_fro(),
              1e-9 * std::max(1.0, (z + h).norm_fro()));
    EXPECT_LE(res.iterations, 6);
    EXPECT_EQ(res.off_norms.size(), static_cast<std::size_t>(res.iterations + 1));
  }
}

TEST(RunElimination, Errors) {
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1, 0, -1;
  EXPECT_THROW(run_elimination(SymMat(d), SymMat::zero(3)), DomainError);
  EXPECT_THROW(run_elimination(SymMat::identity(3), SymMat::zero(2)), DimensionMismatch);
  Matrix z(2, 2);
  z << 0.1, 0, 0, -0.1;
  Matrix h(2, 2);
  h << 0, 3, 3, 0;
  EXPECT_THROW(run_elimination(SymMat(z), SymMat(h)), PerturbationTooLarge);
}

TEST(EbScan, ExactWithoutOffBlock) {
  Matrix z = Matrix::Zero(5, 5);
  z.diagonal() << 2, 1, -0.5, -1, -3;
  Rng rng(6);
  Matrix h = rng.sym_gaussian(5).mat();
  h.bottomLeftCorner(3, 2).setZero();
  h.topRightCorner(2, 3).setZero();
  const auto rep = eb_scan(SymMat(z), SymMat(h), {1e-1, 1e-2, 1e-3, 1e-4});
  for (double v : rep.lhs) EXPECT_LE(v, 1e-12 * 3.0);
  for (double v : rep.ho_norms) EXPECT_EQ(v, 0.0);
  for (double v : rep.refined_ratios) EXPECT_EQ(v, 0.0);
}

TEST(EbScan, RefinedRatioBounded) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const SymMat z = random_reference(rng, 6, 3);
    const auto rep = eb_scan(z, rng.sym_gaussian(6), {1e-1, 1e-2, 1e-3, 1e-4});
    const auto [lo, hi] =
        std::minmax_element(rep.refined_ratios.begin(), rep.refined_ratios.end());
    EXPECT_GT(*lo, 0.0);
    EXPECT_LE(*hi, 10 * *lo);
    for (std::size_t i = 0; i < rep.scales.size(); ++i) {
      EXPECT_TRUE(std::isfinite(rep.lhs[i]) && rep.lhs[i] >= 0);
      EXPECT_TRUE(std::isfinite(rep.classic_ratios[i]) && rep.classic_ratios[i] >= 0);
    }
  }
}

TEST(EbScan, AnisotropicPathIsCubic) {
  Rng rng(8);
  const SymMat z = random_reference(rng, 6, 3);
  const auto os = build_omega(eig_sym(z));
  const Matrix g = os.to_local(rng.sym_gaussian(6));
  Matrix diag_part = g, off_part = g;
  diag_part.bottomLeftCorner(3, 3).setZero();
  diag_part.topRightCorner(3, 3).setZero();
  off_part -= diag_part;
  const SymMat hd = os.from_local(diag_part), ho = os.from_local(off_part);
  const std::vector<double> ts{1e-1, 1e-2, 1e-3, 1e-4};
  const auto rep = eb_scan(z, [&](double t) { return t * hd + (t * t) * ho; }, ts);
  EXPECT_GE(loglog_slope(ts, rep.lhs), 2.7);
  // Classic ratio lhs / ||H||^2 decays with t on this path.
  EXPECT_LT(rep.classic_ratios.back(), 1e-2 * rep.classic_ratios.front());
}

TEST(EbScan, Serialization) {
  Rng rng(9);
  const SymMat z = random_reference(rng, 4, 2);
  const auto rep = eb_scan(z, rng.sym_gaussian(4), {1e-1, 1e-2});
  std::ostringstream os;
  rep.write_csv(os);
  std::istringstream in(os.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,lhs,ho_norm,refined_ratio,classic_ratio");
  const auto j = rep.to_json();
  EXPECT_EQ(j["norm"], "spectral");
  EXPECT_EQ(j["lhs"].size(), 2u);
}

TEST(FirstSylvester, PureOffBlock) {
  Matrix z = Matrix::Zero(5, 5);
  z.diagonal() << 2, 1, -0.5, -1, -2;
  Rng rng(10);
  Matrix h = Matrix::Zero(5, 5);
  const Matrix o = 0.01 * rng.gaussian(3, 2);
  h.bottomLeftCorner(3, 2) = o;
  h.topRightCorner(2, 3) = o.transpose();
  const auto dev = first_sylvester_deviation(SymMat(z), SymMat(h));
  EXPECT_LE(dev.deviation, 1e-12);
  EXPECT_EQ(dev.bound, 0.0);
}

TEST(FirstSylvester, NoOffBlock) {
  Matrix z = Matrix::Zero(4, 4);
  z.diagonal() << 2, 1, -1, -2;
  Matrix h = Matrix::Zero(4, 4);
  h(0, 1) = h(1, 0) = 0.01;
  h(2, 2) = 0.01;
  const auto dev = first_sylvester_deviation(SymMat(z), SymMat(h));
  EXPECT_EQ(dev.deviation, 0.0);
}

TEST(FirstSylvester, RandomSmallPerturbations) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    Matrix z = Matrix::Zero(6, 6);
    z.diagonal() << 2, 1.5, 1, -0.7, -1.2, -2;
    SymMat h = rng.sym_gaussian(6);
    h = (0.01 / norm2(h)) * h;
    const auto dev = first_sylvester_deviation(SymMat(z), h);
    EXPECT_LE(dev.deviation, dev.bound);
  }
}

TEST(FirstSylvester, Preconditions) {
  Matrix z = Matrix::Zero(3, 3);
  z.diagonal() << 1, -1, -2;
  EXPECT_THROW(first_sylvester_deviation(SymMat(z), SymMat::identity(3)), DomainError);
  Matrix unsorted = Matrix::Zero(2, 2);
  unsorted.diagonal() << -1, 1;
  EXPECT_THROW(first_sylvester_deviation(SymMat(unsorted), SymMat::zero(2)), DomainError);
  Matrix full(2, 2);
  full << 1, 0.1, 0.1, -1;
  EXPECT_THROW(first_sylvester_deviation(SymMat(full), SymMat::zero(2)), DomainError);
}
