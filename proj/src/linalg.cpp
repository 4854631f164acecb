#include "cmr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cmr {

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() != m.cols()) fail(ErrorKind::ShapeMismatch, "SymMatrix: input is not square");
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zero(Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

SymMatrix SymMatrix::diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::NonFinite, std::string(what) + ": non-finite entry");
}

EigPair eig_sym(const SymMatrix& m) {
  require_finite(m.matrix(), "eig_sym");
  const Index n = m.dim();
  if (n == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix());
  if (solver.info() != Eigen::Success) fail(ErrorKind::NonFinite, "eig_sym: decomposition failed");
  // Eigen returns ascending order; flip it.
  EigPair out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

Matrix leading_eigenvectors(const EigPair& eig, Index r) {
  if (r < 0 || r > eig.vectors.cols())
    fail(ErrorKind::RankRequest, "leading_eigenvectors: r exceeds dimension");
  return eig.vectors.leftCols(r);
}

double default_eig_floor(const SymMatrix& m) {
  const auto eig = eig_sym(m);
  const double top = eig.values.size() ? std::max(eig.values(0), 0.0) : 0.0;
  return std::max(1e-10 * top, std::numeric_limits<double>::min());
}

SymMatrix inv_sqrt_psd(const SymMatrix& m, double eig_floor) {
  if (!(eig_floor > 0)) fail(ErrorKind::InvalidArgument, "inv_sqrt_psd: eig_floor must be positive");
  const auto eig = eig_sym(m);
  if (eig.values.size() == 0) return m;
  const double lmin = eig.values(eig.values.size() - 1);
  if (lmin < eig_floor)
    fail(ErrorKind::NotInvertible, "inv_sqrt_psd: smallest eigenvalue " + std::to_string(lmin) +
                                       " below floor " + std::to_string(eig_floor));
  const Vector scale = eig.values.array().rsqrt();
  return SymMatrix(eig.vectors * scale.asDiagonal() * eig.vectors.transpose());
}

SymMatrix sqrt_psd(const SymMatrix& m, double tol) {
  const auto eig = eig_sym(m);
  if (eig.values.size() == 0) return m;
  const double top = std::max(std::abs(eig.values(0)), std::abs(eig.values(eig.values.size() - 1)));
  if (eig.values(eig.values.size() - 1) < -tol * top)
    fail(ErrorKind::NotPsd, "sqrt_psd: matrix has a negative eigenvalue");
  const Vector root = eig.values.cwiseMax(0.0).cwiseSqrt();
  return SymMatrix(eig.vectors * root.asDiagonal() * eig.vectors.transpose());
}

bool is_psd(const SymMatrix& m, double tol) {
  const auto eig = eig_sym(m);
  if (eig.values.size() == 0) return true;
  const double top = std::max(std::abs(eig.values(0)), std::abs(eig.values(eig.values.size() - 1)));
  return eig.values(eig.values.size() - 1) >= -tol * top;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  require_finite(m, "spectral_norm");
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double min_eigenvalue(const SymMatrix& m) {
  const auto eig = eig_sym(m);
  return eig.values(eig.values.size() - 1);
}

Matrix orthonormal_basis(const Matrix& m, double rel_tol) {
  require_finite(m, "orthonormal_basis");
  if (m.cols() == 0 || m.rows() < m.cols())
    fail(ErrorKind::RankDeficient, "orthonormal_basis: more columns than rows");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  if (!(s(0) > 0) || s(s.size() - 1) < rel_tol * s(0))
    fail(ErrorKind::RankDeficient, "orthonormal_basis: numerically rank deficient input");
  return svd.matrixU();
}

double subspace_distance(const Matrix& u, const Matrix& v) {
  if (u.rows() != v.rows()) fail(ErrorKind::ShapeMismatch, "subspace_distance: row counts differ");
  const Matrix qu = orthonormal_basis(u);
  const Matrix qv = orthonormal_basis(v);
  const Matrix diff = qu * qu.transpose() - qv * qv.transpose();
  return std::clamp(spectral_norm(diff), 0.0, 1.0);
}

double squared_correlation(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "squared_correlation: length mismatch");
  const double na = a.squaredNorm();
  const double nb = b.squaredNorm();
  if (!(na > 0) || !(nb > 0)) return 0.0;
  const double dot = a.dot(b);
  return std::clamp(dot * dot / (na * nb), 0.0, 1.0);
}

}  // namespace cmr

namespace cmr {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotInvertible: return "NotInvertible";
    case ErrorKind::NotPsd: return "NotPsd";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::RankRequest: return "RankRequest";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotDivisible: return "NotDivisible";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace cmr
