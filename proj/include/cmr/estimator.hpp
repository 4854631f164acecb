#pragma once

// Moment estimators, the whitened spectral step and the bilinear refinement.

#include <vector>

#include "cmr/linalg.hpp"
#include "cmr/model.hpp"

namespace cmr {

struct SpectralEstimate {
  SymMatrix gamma_hat;
  SymMatrix a_hat;
  SymMatrix b_hat;
  Vector b_eigenvalues;  // descending
  Matrix w_hat;          // B x R

  // lambda_R - lambda_{R+1} of b_hat; diagnostic only.
  double eigengap() const;
};

struct RefineConfig {
  int max_iters = 500;
  double step_size = 1.0;
  double grad_tol = 1e-8;
  double ridge = 0.0;
  // Scale each V_i block of the descent direction by the task count.
  bool task_scaled_steps = true;

  void validate() const;
};

struct FitResult {
  Matrix w;
  std::vector<Matrix> v;
  std::vector<double> loss_history;  // initial loss, then one entry per accepted step
  bool converged = false;
  int iterations = 0;
};

// Gamma_hat = (1 / ITP) sum_it X_it X_it^T.
SymMatrix estimate_gamma(const TaskDataset& data);

// A_hat = (1 / IT^2) sum_{i,t,t'} y_it y_it' X_it X_it'^T, evaluated as
// (1 / I) sum_i Z_i Z_i^T with Z_i = (1 / T) sum_t y_it X_it.
SymMatrix estimate_a(const TaskDataset& data);

// eig_floor <= 0 selects the relative default (1e-10 * lambda_max of gamma_hat).
// With enforce_rank, r > B or r > T is rejected as RankRequest.
SpectralEstimate spectral_cmr(const TaskDataset& data, Index r, double eig_floor = 0.0, bool enforce_rank = true);

// Whitened spectral step on supplied moments.
SpectralEstimate spectral_from_moments(const SymMatrix& gamma_hat, const SymMatrix& a_hat, Index r,
                                       double eig_floor = 0.0);

// Spectral step with Gamma_hat forced to the identity (no whitening).
SpectralEstimate spectral_cmr_nw(const TaskDataset& data, Index r, bool enforce_rank = true);

// argmin_V sum_t (y_t - tr(W^T X_t V))^2 + ridge ||V||_F^2 for task `task`.
// ridge = 0 gives the minimum-norm least-squares solution.
Matrix fit_local(const Matrix& w, const TaskDataset& data, Index task, double ridge);
std::vector<Matrix> fit_local_all(const Matrix& w, const TaskDataset& data, double ridge);

// Ridge least squares on rows of `features`; picks the primal or dual normal
// equations by shape. ridge = 0 yields the minimum-norm solution.
Vector ridge_solve(const Matrix& features, const Vector& targets, double ridge);

// L(W, V) = (1 / IT) sum_it (y_it - tr(W^T X_it V_i))^2 + ridge (||W||^2 + sum ||V_i||^2)
double refine_objective(const Matrix& w, const std::vector<Matrix>& v, const TaskDataset& data, double ridge);

struct ObjectiveGradient {
  double loss = 0.0;
  Matrix w;
  std::vector<Matrix> v;

  double squared_norm() const;
};

ObjectiveGradient refine_gradient(const Matrix& w, const std::vector<Matrix>& v, const TaskDataset& data,
                                  double ridge);

// Joint gradient descent with Armijo backtracking.
FitResult refine_gd(const Matrix& init_w, const std::vector<Matrix>& init_v, const TaskDataset& data,
                    const RefineConfig& cfg);

// Spectral estimate, closed-form V_i, then refine_gd.
FitResult fit_cmr(const TaskDataset& data, Index r, const RefineConfig& cfg, double eig_floor = 0.0);

// CMR on a single task (I = 1).
FitResult cmr1(const TaskDataset& single_task, Index r, const RefineConfig& cfg);

// Independent ridge regression per task on flat feature rows.
std::vector<Vector> frr_baseline(const std::vector<Matrix>& features, const std::vector<Vector>& labels,
                                 double ridge);

}  // namespace cmr
