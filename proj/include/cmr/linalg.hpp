#pragma once

// Dense symmetric / PSD primitives shared by the model, estimator and
// experiment layers. Everything here is a pure function of its arguments.

#include <Eigen/Dense>

#include "cmr/error.hpp"

namespace cmr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Square matrix that is symmetric by construction: the constructor replaces
// its input with (m + m^T) / 2.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(Index dim);
  static SymMatrix zero(Index dim);
  static SymMatrix diagonal(const Vector& diag);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

 private:
  Matrix m_;
};

// Eigenpairs sorted by value, largest first. `vectors` columns follow `values`.
struct EigPair {
  Vector values;
  Matrix vectors;
};

EigPair eig_sym(const SymMatrix& m);

// Columns spanning the r leading eigenvectors (ties broken by the stable
// descending order of eig_sym).
Matrix leading_eigenvectors(const EigPair& eig, Index r);

// Relative floor used when the caller does not supply one: 1e-10 * lambda_max.
double default_eig_floor(const SymMatrix& m);

// V diag(lambda^{-1/2}) V^T. Throws NotInvertible when lambda_min < eig_floor.
SymMatrix inv_sqrt_psd(const SymMatrix& m, double eig_floor);

// Unique PSD square root. Eigenvalues in [-tol * lambda_max, 0) are clamped to
// zero; anything more negative is NotPsd.
SymMatrix sqrt_psd(const SymMatrix& m, double tol = 1e-9);

bool is_psd(const SymMatrix& m, double tol = 1e-9);

// Largest singular value.
double spectral_norm(const Matrix& m);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const SymMatrix& m);

// Orthonormal basis of the column span. RankDeficient when the smallest
// singular value falls below rel_tol times the largest.
Matrix orthonormal_basis(const Matrix& m, double rel_tol = 1e-10);

// dist(U, V) = || U U^+ - V V^+ ||_2, the sine of the largest principal angle
// between the two column spans.
double subspace_distance(const Matrix& u, const Matrix& v);

// Squared cosine between two vectors, the R = 1 recovery score.
double squared_correlation(const Vector& a, const Vector& b);

void require_finite(const Matrix& m, const char* what);

}  // namespace cmr
