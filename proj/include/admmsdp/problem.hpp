#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "admmsdp/core_linalg.hpp"
#include "admmsdp/random.hpp"

namespace admmsdp {

/// Standard-form SDP:  min <C,X>  s.t.  <A_i,X> = b_i,  X PSD.
/// Dual:               max b^T y  s.t.  sum_i y_i A_i + S = C,  S PSD.
struct SdpProblem {
  Index n = 0;
  Index m = 0;
  SymMat C;
  std::vector<SymMat> A;
  Vector b;
};

/// Columns svec(A_i).
inline Matrix svec_stack(const SdpProblem& p) {
  Matrix w(svec_length(p.n), p.m);
  for (Index i = 0; i < p.m; ++i) w.col(i) = svec(p.A[i]);
  return w;
}

/// Assembles and validates a problem. Throws DimensionMismatch for
/// inconsistent shapes and ValidationError for dependent constraints.
inline SdpProblem make_problem(SymMat C, std::vector<SymMat> A, Vector b) {
  SdpProblem p;
  p.n = C.n();
  p.m = static_cast<Index>(A.size());
  if (b.size() != p.m) {
    std::ostringstream os;
    os << "problem: b has length " << b.size() << " but there are " << p.m
       << " constraints";
    throw DimensionMismatch(os.str());
  }
  for (Index i = 0; i < p.m; ++i) {
    if (A[i].n() != p.n) {
      std::ostringstream os;
      os << "problem: A_" << i + 1 << " is " << A[i].n() << "x" << A[i].n()
         << ", expected " << p.n;
      throw DimensionMismatch(os.str());
    }
  }
  if (!b.allFinite()) throw ValidationError("problem: b has non-finite entries");
  if (p.m > svec_length(p.n)) {
    std::ostringstream os;
    os << "problem: m = " << p.m << " exceeds n(n+1)/2 = " << svec_length(p.n);
    throw ValidationError(os.str());
  }
  p.C = std::move(C);
  p.A = std::move(A);
  p.b = std::move(b);
  if (p.m > 0) {
    Eigen::JacobiSVD<Matrix> svd(svec_stack(p));
    const Vector& sv = svd.singularValues();
    if (!(sv(p.m - 1) > 1e-10 * sv(0))) {
      std::ostringstream os;
      os << "problem: constraint matrices are linearly dependent (sigma_min/sigma_max = "
         << (sv(0) > 0 ? sv(p.m - 1) / sv(0) : 0.0) << ")";
      throw ValidationError(os.str());
    }
  }
  return p;
}

inline void check_dim(const SdpProblem& p, const SymMat& x, const char* who) {
  if (x.n() != p.n) {
    std::ostringstream os;
    os << who << ": matrix is " << x.n() << "x" << x.n() << ", problem has n = "
       << p.n;
    throw DimensionMismatch(os.str());
  }
}

/// A X = (<A_1,X>, ..., <A_m,X>).
inline Vector apply_A(const SdpProblem& p, const SymMat& x) {
  check_dim(p, x, "apply_A");
  Vector v(p.m);
  for (Index i = 0; i < p.m; ++i) v(i) = inner(p.A[i], x);
  return v;
}

/// A* y = sum_i y_i A_i.
inline SymMat apply_At(const SdpProblem& p, const Vector& y) {
  if (y.size() != p.m) {
    std::ostringstream os;
    os << "apply_At: y has length " << y.size() << ", problem has m = " << p.m;
    throw DimensionMismatch(os.str());
  }
  Matrix s = Matrix::Zero(p.n, p.n);
  for (Index i = 0; i < p.m; ++i) s += y(i) * p.A[i].mat();
  return SymMat(s);
}

/// Precomputed factorizations of the constraint operator.
class ConstraintKernel {
 public:
  explicit ConstraintKernel(const SdpProblem& p) : n_(p.n), m_(p.m) {
    w_ = svec_stack(p);
    gram_mat_ = w_.transpose() * w_;
    if (m_ > 0) {
      gram_.compute(gram_mat_);
      if (gram_.info() != Eigen::Success) {
        throw DomainError("ConstraintKernel: Gram matrix AA* is not positive definite");
      }
      Eigen::HouseholderQR<Matrix> qr(w_);
      basis_ = qr.householderQ() * Matrix::Identity(w_.rows(), m_);
    } else {
      basis_ = Matrix(svec_length(n_), 0);
    }
    pinv_b_ = apply_At(p, gram_solve(p.b));
  }

  Index n() const { return n_; }
  Index m() const { return m_; }

  /// Cholesky factor L of AA* = L L^T.
  Matrix gram_factor() const {
    return m_ > 0 ? Matrix(gram_.matrixL()) : Matrix(0, 0);
  }
  const Matrix& gram_matrix() const { return gram_mat_; }
  /// Orthonormal basis of R(A*) in svec coordinates.
  const Matrix& basis() const { return basis_; }
  const Matrix& svec_columns() const { return w_; }

  /// (AA*)^{-1} v.
  Vector gram_solve(const Vector& v) const {
    if (v.size() != m_) throw DimensionMismatch("gram_solve: length mismatch");
    if (m_ == 0) return Vector(0);
    return gram_.solve(v);
  }

  /// A^dagger b = A*(AA*)^{-1} b.
  const SymMat& pinv_b() const { return pinv_b_; }

  /// P H, orthogonal projection onto R(A*).
  SymMat project_range(const SymMat& h) const {
    if (h.n() != n_) throw DimensionMismatch("project_range: dimension mismatch");
    if (m_ == 0) return SymMat::zero(n_);
    const Vector v = svec(h);
    return smat(basis_ * (basis_.transpose() * v));
  }

  /// P_perp H = H - P H, orthogonal projection onto N(A).
  SymMat project_null(const SymMat& h) const { return h - project_range(h); }

 private:
  Index n_;
  Index m_;
  Matrix w_;
  Matrix gram_mat_;
  Eigen::LLT<Matrix> gram_;
  Matrix basis_;
  SymMat pinv_b_;
};

/// Planted primal-dual optimal pair: Xstar = Q diag(Lx, 0) Q^T,
/// Sstar = Q diag(0, Ls) Q^T.
struct PlantedCertificate {
  SymMat Xstar;
  Vector ystar;
  SymMat Sstar;
  Matrix Qstar;
  Index r = 0;
  Index s = 0;
};

enum class Degeneracy {
  none,
  /// One constraint matrix lies in the normal space of Xstar's face.
  primal_nd_fail,
  /// As none, but the smallest planted eigenvalue on each side is 1e-6.
  near_degenerate
};

struct PlantedInstance {
  SdpProblem problem;
  PlantedCertificate certificate;
};

/// Random instance with a known strictly complementary solution. Sampling
/// order: Q, Lx (r values), Ls (n-r values), A_1..A_m, y; the witness G for
/// primal_nd_fail is drawn last.
inline PlantedInstance generate_planted(Index n, Index m, Index r,
                                        std::uint64_t seed,
                                        Degeneracy degeneracy = Degeneracy::none) {
  if (!(r >= 1 && r < n)) {
    std::ostringstream os;
    os << "generate_planted: need 1 <= r < n, got r = " << r << ", n = " << n;
    throw DomainError(os.str());
  }
  if (m < 0 || m > svec_length(n) - 1) {
    std::ostringstream os;
    os << "generate_planted: need 0 <= m <= n(n+1)/2 - 1 = " << svec_length(n) - 1
       << ", got m = " << m;
    throw DomainError(os.str());
  }
  if (degeneracy == Degeneracy::primal_nd_fail && (m < 1 || n - r < 2)) {
    throw DomainError(
        "generate_planted: primal_nd_fail needs m >= 1 and n - r >= 2");
  }

  Rng rng(seed);
  const Index q = n - r;
  const Matrix Q = rng.orthogonal(n);
  Vector lx(r), ls(q);
  for (Index i = 0; i < r; ++i) lx(i) = rng.uniform(0.5, 2.0);
  for (Index i = 0; i < q; ++i) ls(i) = rng.uniform(0.5, 2.0);
  if (degeneracy == Degeneracy::near_degenerate) {
    lx(r - 1) = 1e-6;
    ls(q - 1) = 1e-6;
  }

  Vector dx = Vector::Zero(n), ds = Vector::Zero(n);
  dx.head(r) = lx;
  ds.tail(q) = ls;
  PlantedCertificate cert;
  cert.Qstar = Q;
  cert.r = r;
  cert.s = q;
  cert.Xstar = SymMat(Q * dx.asDiagonal() * Q.transpose());
  cert.Sstar = SymMat(Q * ds.asDiagonal() * Q.transpose());

  std::vector<SymMat> A;
  A.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) A.push_back(rng.sym_gaussian(n));
  cert.ystar = rng.gaussian(m);

  if (degeneracy == Degeneracy::primal_nd_fail) {
    Matrix g = rng.sym_gaussian(q).mat();
    const Matrix l = ls.asDiagonal();
    g -= (g.cwiseProduct(l).sum() / l.squaredNorm()) * l;
    Matrix blk = Matrix::Zero(n, n);
    blk.bottomRightCorner(q, q) = g;
    A[0] = SymMat(Q * blk * Q.transpose());
  }

  Vector b(m);
  for (Index i = 0; i < m; ++i) b(i) = inner(A[i], cert.Xstar);
  Matrix c = cert.Sstar.mat();
  for (Index i = 0; i < m; ++i) c += cert.ystar(i) * A[i].mat();

  PlantedInstance out;
  out.problem = make_problem(SymMat(c), std::move(A), std::move(b));
  out.certificate = std::move(cert);
  return out;
}

/// MAXCUT relaxation: min <-L/4, X> s.t. diag(X) = 1, X PSD.
inline SdpProblem generate_maxcut(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0) {
    throw DomainError("generate_maxcut: adjacency must be square and nonempty");
  }
  for (Index i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) {
      throw DomainError("generate_maxcut: adjacency has a nonzero diagonal");
    }
    for (Index j = 0; j < n; ++j) {
      const double v = adjacency(i, j);
      if (v != adjacency(j, i)) {
        throw DomainError("generate_maxcut: adjacency is not symmetric");
      }
      if (v != 0.0 && v != 1.0) {
        throw DomainError("generate_maxcut: adjacency entries must be 0 or 1");
      }
    }
  }
  const Vector deg = adjacency.rowwise().sum();
  const Matrix lap = Matrix(deg.asDiagonal()) - adjacency;
  std::vector<SymMat> A;
  for (Index i = 0; i < n; ++i) {
    Matrix e = Matrix::Zero(n, n);
    e(i, i) = 1.0;
    A.emplace_back(e);
  }
  return make_problem(SymMat(-0.25 * lap), std::move(A), Vector::Ones(n));
}

}  // namespace admmsdp
