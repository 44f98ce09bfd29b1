#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "admmsdp/errors.hpp"

namespace admmsdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense real symmetric matrix. Construction symmetrizes by averaging with the
/// transpose, so entries (i,j) and (j,i) are always bitwise equal.
class SymMat {
 public:
  SymMat() = default;

  explicit SymMat(const Matrix& a) {
    if (a.rows() != a.cols()) {
      std::ostringstream os;
      os << "SymMat requires a square matrix, got " << a.rows() << "x"
         << a.cols();
      throw DimensionMismatch(os.str());
    }
    if (!a.allFinite()) {
      throw NumericalFailure("SymMat: non-finite entries");
    }
    m_ = 0.5 * (a + a.transpose());
  }

  static SymMat zero(Index n) { return SymMat(Matrix::Zero(n, n)); }
  static SymMat identity(Index n) { return SymMat(Matrix::Identity(n, n)); }

  Index n() const { return m_.rows(); }
  const Matrix& mat() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  double norm_fro() const { return m_.norm(); }

  friend SymMat operator+(const SymMat& a, const SymMat& b) {
    check_same(a, b);
    return SymMat(a.m_ + b.m_, Trusted{});
  }
  friend SymMat operator-(const SymMat& a, const SymMat& b) {
    check_same(a, b);
    return SymMat(a.m_ - b.m_, Trusted{});
  }
  friend SymMat operator-(const SymMat& a) { return SymMat(-a.m_, Trusted{}); }
  friend SymMat operator*(double s, const SymMat& a) {
    return SymMat(s * a.m_, Trusted{});
  }
  friend SymMat operator*(const SymMat& a, double s) { return s * a; }
  SymMat& operator+=(const SymMat& b) {
    check_same(*this, b);
    m_ += b.m_;
    return *this;
  }
  SymMat& operator-=(const SymMat& b) {
    check_same(*this, b);
    m_ -= b.m_;
    return *this;
  }

 private:
  struct Trusted {};
  // Elementwise ops on symmetric operands stay exactly symmetric.
  SymMat(Matrix a, Trusted) : m_(std::move(a)) {}

  static void check_same(const SymMat& a, const SymMat& b) {
    if (a.n() != b.n()) {
      std::ostringstream os;
      os << "SymMat dimension mismatch: " << a.n() << " vs " << b.n();
      throw DimensionMismatch(os.str());
    }
  }

  Matrix m_;
};

/// Frobenius inner product <A,B> = trace(AB).
inline double inner(const SymMat& a, const SymMat& b) {
  if (a.n() != b.n()) throw DimensionMismatch("inner: dimension mismatch");
  return a.mat().cwiseProduct(b.mat()).sum();
}

inline Index svec_length(Index n) { return n * (n + 1) / 2; }

/// Symmetric vectorization: lower triangle in column-major order with the
/// off-diagonal entries scaled by sqrt(2), so dot(svec A, svec B) = <A,B>.
inline Vector svec(const SymMat& a) {
  const Index n = a.n();
  Vector v(svec_length(n));
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    v(k++) = a(j, j);
    for (Index i = j + 1; i < n; ++i) v(k++) = M_SQRT2 * a(i, j);
  }
  return v;
}

inline SymMat smat(const Vector& v) {
  // n(n+1)/2 = len
  const Index n = static_cast<Index>(
      std::llround((std::sqrt(8.0 * static_cast<double>(v.size()) + 1.0) - 1.0) / 2.0));
  if (svec_length(n) != v.size()) {
    throw DimensionMismatch("smat: length is not a triangular number");
  }
  Matrix a(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    a(j, j) = v(k++);
    for (Index i = j + 1; i < n; ++i) {
      a(i, j) = v(k++) / M_SQRT2;
      a(j, i) = a(i, j);
    }
  }
  return SymMat(a);
}

/// Eigendecomposition with eigenvalues sorted in descending order.
struct SpectralDecomp {
  Matrix Q;
  Vector lambda;

  Index n() const { return lambda.size(); }
  SymMat reconstruct() const {
    return SymMat(Q * lambda.asDiagonal() * Q.transpose());
  }
};

/// Spectral decomposition. Columns are ordered by descending eigenvalue and
/// each column is signed so its largest-magnitude entry is positive.
inline SpectralDecomp eig_sym(const SymMat& a) {
  const Index n = a.n();
  SpectralDecomp d;
  if (n == 0) {
    d.Q = Matrix(0, 0);
    d.lambda = Vector(0);
    return d;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat());
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "eig_sym: eigensolver did not converge (n=" << n
       << ", |A|_F=" << a.norm_fro()
       << ", max|a_ij|=" << a.mat().cwiseAbs().maxCoeff() << ")";
    throw NumericalFailure(os.str());
  }
  d.Q = es.eigenvectors().rowwise().reverse();
  d.lambda = es.eigenvalues().reverse();
  for (Index j = 0; j < n; ++j) {
    Index imax = 0;
    d.Q.col(j).cwiseAbs().maxCoeff(&imax);
    if (d.Q(imax, j) < 0.0) d.Q.col(j) *= -1.0;
  }
  return d;
}

/// Pi(A) and Pi(-A) from a single decomposition: A = pos - neg.
struct PsdSplit {
  SymMat pos;
  SymMat neg;
};

inline PsdSplit psd_split(const SpectralDecomp& d) {
  const Index n = d.n();
  Index npos = 0;
  while (npos < n && d.lambda(npos) > 0.0) ++npos;
  Index nneg = 0;
  while (nneg < n - npos && d.lambda(n - 1 - nneg) < 0.0) ++nneg;
  const auto qp = d.Q.leftCols(npos);
  const auto qn = d.Q.rightCols(nneg);
  Matrix pos = qp * d.lambda.head(npos).asDiagonal() * qp.transpose();
  Matrix neg = qn * (-d.lambda.tail(nneg)).asDiagonal() * qn.transpose();
  return {SymMat(pos), SymMat(neg)};
}

/// Orthogonal (Frobenius) projection onto the PSD cone.
inline SymMat psd_project(const SymMat& a) { return psd_split(eig_sym(a)).pos; }

/// Spectral norm (largest singular value) of an arbitrary dense matrix.
inline double norm2(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  if (a.rows() == a.cols() && a.isApprox(a.transpose(), 0.0)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline double norm2(const SymMat& a) { return norm2(a.mat()); }

inline double lambda_min(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double lambda_max(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(a.rows() - 1);
}

/// 2x2 block partition of an n x n matrix at split r:
/// [ X  O^T ]
/// [ O  S   ]  with X r x r, O (n-r) x r, S (n-r) x (n-r).
struct BlockView {
  Matrix X;
  Matrix O;
  Matrix S;
};

inline BlockView split_blocks(const Matrix& a, Index r) {
  const Index n = a.rows();
  return {a.topLeftCorner(r, r), a.bottomLeftCorner(n - r, r),
          a.bottomRightCorner(n - r, n - r)};
}

inline Matrix join_blocks(const Matrix& x, const Matrix& o, const Matrix& s) {
  const Index r = x.rows();
  const Index n = r + s.rows();
  Matrix a(n, n);
  a.topLeftCorner(r, r) = x;
  a.bottomLeftCorner(n - r, r) = o;
  a.topRightCorner(r, n - r) = o.transpose();
  a.bottomRightCorner(n - r, n - r) = s;
  return a;
}

enum class SylvesterMethod { automatic, kronecker, eigen };

/// Largest Kronecker-sum system solved densely by the automatic path.
inline constexpr Index kSylvesterKroneckerMax = 256;

/// Solves W*Zx + (-Zs)*W = Zo for W ((n-r) x r) with Zx positive definite and
/// Zs negative definite, which makes the Kronecker-sum operator SPD.
inline Matrix sylvester_solve(const Matrix& zx, const Matrix& zs,
                              const Matrix& zo,
                              SylvesterMethod method = SylvesterMethod::automatic) {
  const Index r = zx.rows();
  const Index q = zs.rows();
  if (zx.cols() != r || zs.cols() != q || zo.rows() != q || zo.cols() != r) {
    throw DimensionMismatch("sylvester_solve: block shapes do not agree");
  }
  if (r == 0 || q == 0) return Matrix::Zero(q, r);

  Eigen::SelfAdjointEigenSolver<Matrix> ex(0.5 * (zx + zx.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (zs + zs.transpose()));
  const double xmin = ex.eigenvalues()(0);
  const double xmax = ex.eigenvalues()(r - 1);
  const double smin = es.eigenvalues()(0);
  const double smax = es.eigenvalues()(q - 1);
  if (!(xmin > 0.0) || !(smax < 0.0)) {
    std::ostringstream os;
    os << "sylvester_solve: need lambda_min(Zx) > 0 and lambda_max(Zs) < 0, got "
       << xmin << " and " << smax;
    throw DomainError(os.str());
  }
  const double cond = (xmax - smin) / (xmin - smax);
  if (cond > 1e14) {
    std::ostringstream os;
    os << "sylvester_solve: Kronecker-sum condition estimate " << cond;
    throw NumericalFailure(os.str());
  }

  if (method == SylvesterMethod::automatic) {
    method = r * q <= kSylvesterKroneckerMax ? SylvesterMethod::kronecker
                                             : SylvesterMethod::eigen;
  }
  if (method == SylvesterMethod::kronecker) {
    // vec(W Zx) = (Zx^T (x) I_q) vec W,  vec(-Zs W) = (I_r (x) -Zs) vec W
    const Index dim = r * q;
    Matrix k = Matrix::Zero(dim, dim);
    for (Index a = 0; a < r; ++a) {
      k.block(a * q, a * q, q, q) -= zs;
      for (Index b = 0; b < r; ++b) {
        k.block(a * q, b * q, q, q).diagonal().array() += zx(b, a);
      }
    }
    Eigen::LLT<Matrix> llt(0.5 * (k + k.transpose()));
    if (llt.info() != Eigen::Success) {
      throw NumericalFailure("sylvester_solve: Kronecker system not SPD");
    }
    Vector rhs = Eigen::Map<const Vector>(zo.data(), dim);
    Vector w = llt.solve(rhs);
    return Eigen::Map<Matrix>(w.data(), q, r);
  }

  // Diagonalize both blocks; the equation decouples entrywise.
  const Matrix& u = ex.eigenvectors();
  const Matrix& v = es.eigenvectors();
  Matrix f = v.transpose() * zo * u;
  for (Index j = 0; j < r; ++j) {
    for (Index i = 0; i < q; ++i) {
      f(i, j) /= ex.eigenvalues()(j) - es.eigenvalues()(i);
    }
  }
  return v * f * u.transpose();
}

/// Matrix exponential of a skew-symmetric matrix by scaling and squaring with
/// a diagonal [6/6] Pade approximant. The result is orthogonal.
inline Matrix skew_exp(const Matrix& w) {
  const Index n = w.rows();
  if (w.cols() != n) throw DimensionMismatch("skew_exp: matrix not square");
  const double wn = w.norm();
  if ((w + w.transpose()).norm() > 1e-12 * std::max(1.0, wn)) {
    throw DomainError("skew_exp: input is not skew-symmetric");
  }
  if (n == 0) return Matrix(0, 0);

  const double norm1 = w.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Matrix a = w / std::ldexp(1.0, squarings);

  static constexpr double c[7] = {1.0,
                                  1.0 / 2.0,
                                  5.0 / 44.0,
                                  1.0 / 66.0,
                                  1.0 / 792.0,
                                  1.0 / 15840.0,
                                  1.0 / 665280.0};
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix even = c[0] * id + c[2] * a2 + c[4] * a4 + c[6] * a6;
  const Matrix odd = a * (c[1] * id + c[3] * a2 + c[5] * a4);
  Matrix r = (even - odd).partialPivLu().solve(even + odd);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

}  // namespace admmsdp
