#pragma once

// Ground-truth representation of the common-mechanism model
//   y_it = tr(W^T X_it V_i),  cov(vec X_it) = Gamma (x) Delta_i,
// together with the sampler for it and the closed-form moment oracles used to
// check the estimator.

#include <cstdint>
#include <utility>
#include <vector>

#include "cmr/linalg.hpp"
#include "cmr/rng.hpp"

namespace cmr {

struct CmrModel {
  Matrix w;               // B x R common mechanism
  std::vector<Matrix> v;  // I matrices, each P x R

  Index bands() const { return w.rows(); }
  Index rank() const { return w.cols(); }
  Index tasks() const { return static_cast<Index>(v.size()); }
  Index positions() const { return v.empty() ? 0 : v.front().rows(); }

  // Throws ShapeMismatch unless every V_i is P x R with R = W.cols() >= 1.
  void validate() const;
};

struct TaskCovariances {
  SymMatrix gamma;                // B x B, shared
  std::vector<SymMatrix> deltas;  // I matrices, each P x P
  bool trace_normalized = true;

  // Validates PSD-ness and, when `normalize` is set, rescales every Delta_i
  // to trace P.
  static TaskCovariances make(SymMatrix gamma, std::vector<SymMatrix> deltas, bool normalize = true);
  static TaskCovariances identity(Index b, Index p, Index tasks);

  Index bands() const { return gamma.dim(); }
  Index positions() const { return deltas.empty() ? 0 : deltas.front().dim(); }
  Index tasks() const { return static_cast<Index>(deltas.size()); }
};

// I x T design matrices stored contiguously, task-major, each B x P
// column-major. Viewed as a whole the storage is one B x (I*T*P) matrix.
class TaskDataset {
 public:
  TaskDataset() = default;
  TaskDataset(Index tasks, Index samples, Index b, Index p);

  Index tasks() const { return tasks_; }
  Index samples() const { return samples_; }
  Index bands() const { return b_; }
  Index positions() const { return p_; }
  bool empty() const { return tasks_ == 0 || samples_ == 0; }

  Eigen::Map<const Matrix> x(Index i, Index t) const {
    return Eigen::Map<const Matrix>(x_.data() + offset(i, t), b_, p_);
  }
  Eigen::Map<Matrix> x(Index i, Index t) { return Eigen::Map<Matrix>(x_.data() + offset(i, t), b_, p_); }

  double y(Index i, Index t) const { return y_[static_cast<std::size_t>(i * samples_ + t)]; }
  double& y(Index i, Index t) { return y_[static_cast<std::size_t>(i * samples_ + t)]; }

  // B x (I*T*P) view over every design matrix side by side.
  Eigen::Map<const Matrix> all_columns() const {
    return Eigen::Map<const Matrix>(x_.data(), b_, tasks_ * samples_ * p_);
  }

  const std::vector<double>& responses() const { return y_; }
  void set_responses(std::vector<double> y);

  // Copy of a single task as a one-task dataset.
  TaskDataset task(Index i) const;

  // Throws NonFinite if any response is NaN/Inf.
  void validate() const;

 private:
  std::size_t offset(Index i, Index t) const {
    return static_cast<std::size_t>(((i * samples_) + t) * b_ * p_);
  }

  Index tasks_ = 0, samples_ = 0, b_ = 0, p_ = 0;
  std::vector<double> x_;
  std::vector<double> y_;
};

struct ExpectedA {
  SymMatrix a;
  SymMatrix q;
  double beta = 0.0;
};

struct DivergenceCoefficients {
  double eta = 0, alpha = 0, mu = 0, nu = 0, psi = 0, chi = 0, kappa_gamma = 0;
  std::vector<double> l_per_task;
  double d = 0, m = 0, l = 0;
  double lambda_min_signal = 0;  // R-th eigenvalue of Gamma W Q W^T Gamma
};

// Draws Gamma^{1/2} K Delta^{1/2} with the square roots computed once.
class MatrixNormalSampler {
 public:
  MatrixNormalSampler(const SymMatrix& gamma, const SymMatrix& delta);

  Matrix sample(SeededRng& rng) const;
  void sample_into(SeededRng& rng, Eigen::Map<Matrix> out) const;

 private:
  Matrix gamma_root_;
  Matrix delta_root_;
  bool gamma_identity_;
  bool delta_identity_;
};

Matrix sample_matrix_normal(const SymMatrix& gamma, const SymMatrix& delta, SeededRng& rng);

// Random W (orthonormal columns) and V_i (unit spectral norm), then X_it and
// noiseless y_it. Draw order: W, V_1..V_I, X_11..X_IT.
std::pair<CmrModel, TaskDataset> generate_synthetic(Index b, Index p, Index r, Index tasks, Index samples,
                                                    const TaskCovariances& cov, SeededRng& rng);

CmrModel random_model(Index b, Index p, Index r, Index tasks, SeededRng& rng);

// Samples X for a fixed model and fills noiseless responses.
TaskDataset sample_dataset(const CmrModel& model, const TaskCovariances& cov, Index samples, SeededRng& rng);

// y_it = tr(W^T X_it V_i), task-major.
std::vector<double> responses(const CmrModel& model, const TaskDataset& data);

ExpectedA expected_a(const CmrModel& model, const TaskCovariances& cov, Index samples);

// Smallest nonzero (R-th largest) eigenvalue of Gamma W Q W^T Gamma.
double signal_lambda_min(const CmrModel& model, const TaskCovariances& cov, const ExpectedA& expected);

double davis_kahan_bound(double eps1, double eps2, const CmrModel& model, const TaskCovariances& cov,
                         const ExpectedA& expected);

DivergenceCoefficients divergence_coefficients(const CmrModel& model, const TaskCovariances& cov);

// SPD matrix with eigenvalues geometrically spaced on [1, condition] in a
// random orthonormal basis.
SymMatrix random_spd(Index dim, double condition, SeededRng& rng);

Matrix random_orthonormal(Index rows, Index cols, SeededRng& rng);

}  // namespace cmr
