#include "cmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cmr {

void CmrModel::validate() const {
  if (w.cols() < 1 || w.rows() < 1) fail(ErrorKind::ShapeMismatch, "CmrModel: W must be B x R with R >= 1");
  if (w.cols() > w.rows()) fail(ErrorKind::ShapeMismatch, "CmrModel: R exceeds B");
  if (v.empty()) fail(ErrorKind::ShapeMismatch, "CmrModel: no tasks");
  for (const auto& vi : v)
    if (vi.rows() != v.front().rows() || vi.cols() != w.cols() || vi.rows() < 1)
      fail(ErrorKind::ShapeMismatch, "CmrModel: V_i shapes disagree");
}

TaskCovariances TaskCovariances::make(SymMatrix gamma, std::vector<SymMatrix> deltas, bool normalize) {
  if (!is_psd(gamma)) fail(ErrorKind::NotPsd, "TaskCovariances: Gamma is not PSD");
  for (auto& d : deltas) {
    if (d.dim() != deltas.front().dim()) fail(ErrorKind::ShapeMismatch, "TaskCovariances: Delta sizes differ");
    if (!is_psd(d)) fail(ErrorKind::NotPsd, "TaskCovariances: Delta_i is not PSD");
    if (normalize) {
      const double tr = d.trace();
      const auto target = static_cast<double>(d.dim());
      if (!(tr > 0)) fail(ErrorKind::Degenerate, "TaskCovariances: Delta_i has zero trace");
      // Already-normalized input is kept bit-for-bit so that reloading is exact.
      if (std::abs(tr - target) > 1e-12 * target) d = SymMatrix(d.matrix() * (target / tr));
    }
  }
  TaskCovariances out;
  out.gamma = std::move(gamma);
  out.deltas = std::move(deltas);
  out.trace_normalized = normalize;
  return out;
}

TaskCovariances TaskCovariances::identity(Index b, Index p, Index tasks) {
  TaskCovariances out;
  out.gamma = SymMatrix::identity(b);
  out.deltas.assign(static_cast<std::size_t>(tasks), SymMatrix::identity(p));
  out.trace_normalized = true;
  return out;
}

TaskDataset::TaskDataset(Index tasks, Index samples, Index b, Index p)
    : tasks_(tasks), samples_(samples), b_(b), p_(p) {
  if (tasks < 0 || samples < 0 || b < 1 || p < 1) fail(ErrorKind::ShapeMismatch, "TaskDataset: bad dimensions");
  x_.assign(static_cast<std::size_t>(tasks * samples * b * p), 0.0);
  y_.assign(static_cast<std::size_t>(tasks * samples), 0.0);
}

void TaskDataset::set_responses(std::vector<double> y) {
  if (y.size() != y_.size()) fail(ErrorKind::ShapeMismatch, "TaskDataset: response count mismatch");
  y_ = std::move(y);
}

TaskDataset TaskDataset::task(Index i) const {
  if (i < 0 || i >= tasks_) fail(ErrorKind::ShapeMismatch, "TaskDataset::task: index out of range");
  TaskDataset out(1, samples_, b_, p_);
  const auto block = static_cast<std::size_t>(samples_ * b_ * p_);
  std::copy_n(x_.begin() + static_cast<std::ptrdiff_t>(offset(i, 0)), block, out.x_.begin());
  std::copy_n(y_.begin() + static_cast<std::ptrdiff_t>(i * samples_), samples_, out.y_.begin());
  return out;
}

void TaskDataset::validate() const {
  for (double v : y_)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "TaskDataset: non-finite response");
}

namespace {

bool is_identity(const Matrix& m) { return m.isApprox(Matrix::Identity(m.rows(), m.cols()), 0.0); }

}  // namespace

MatrixNormalSampler::MatrixNormalSampler(const SymMatrix& gamma, const SymMatrix& delta)
    : gamma_identity_(is_identity(gamma.matrix())), delta_identity_(is_identity(delta.matrix())) {
  // sqrt_psd reports NotPsd for lambda_min < -1e-9 lambda_max.
  if (!gamma_identity_) gamma_root_ = sqrt_psd(gamma).matrix();
  if (!delta_identity_) delta_root_ = sqrt_psd(delta).matrix();
  if (gamma_identity_) gamma_root_ = Matrix::Identity(gamma.dim(), gamma.dim());
  if (delta_identity_) delta_root_ = Matrix::Identity(delta.dim(), delta.dim());
}

void MatrixNormalSampler::sample_into(SeededRng& rng, Eigen::Map<Matrix> out) const {
  const Index b = gamma_root_.rows();
  const Index p = delta_root_.rows();
  if (out.rows() != b || out.cols() != p) fail(ErrorKind::ShapeMismatch, "sample_into: output shape");
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < b; ++i) out(i, j) = rng.normal();
  if (!gamma_identity_) out = gamma_root_ * out;
  if (!delta_identity_) out = out * delta_root_;
}

Matrix MatrixNormalSampler::sample(SeededRng& rng) const {
  Matrix out(gamma_root_.rows(), delta_root_.rows());
  sample_into(rng, Eigen::Map<Matrix>(out.data(), out.rows(), out.cols()));
  return out;
}

Matrix sample_matrix_normal(const SymMatrix& gamma, const SymMatrix& delta, SeededRng& rng) {
  return MatrixNormalSampler(gamma, delta).sample(rng);
}

Matrix random_orthonormal(Index rows, Index cols, SeededRng& rng) {
  const Matrix g = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Fix the sign convention so the result is a deterministic function of g.
  const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index k = 0; k < cols; ++k)
    if (r(k, k) < 0) q.col(k) *= -1.0;
  return q;
}

CmrModel random_model(Index b, Index p, Index r, Index tasks, SeededRng& rng) {
  if (r < 1 || r > std::min(b, p) || tasks < 1)
    fail(ErrorKind::ShapeMismatch, "random_model: require 1 <= r <= min(b, p) and tasks >= 1");
  CmrModel model;
  model.w = random_orthonormal(b, r, rng);
  model.v.reserve(static_cast<std::size_t>(tasks));
  for (Index i = 0; i < tasks; ++i) {
    Matrix vi = rng.normal_matrix(p, r);
    const double norm = spectral_norm(vi);
    if (norm > 0) vi /= norm;
    model.v.push_back(std::move(vi));
  }
  return model;
}

TaskDataset sample_dataset(const CmrModel& model, const TaskCovariances& cov, Index samples, SeededRng& rng) {
  model.validate();
  if (cov.bands() != model.bands() || cov.positions() != model.positions() || cov.tasks() != model.tasks())
    fail(ErrorKind::ShapeMismatch, "sample_dataset: covariance shapes do not match the model");
  if (samples < 1) fail(ErrorKind::ShapeMismatch, "sample_dataset: need at least one sample per task");
  TaskDataset data(model.tasks(), samples, model.bands(), model.positions());
  std::vector<MatrixNormalSampler> samplers;
  samplers.reserve(cov.deltas.size());
  // Tasks sharing the same Delta reuse the first sampler built for it.
  for (Index i = 0; i < model.tasks(); ++i) {
    const auto& d = cov.deltas[static_cast<std::size_t>(i)].matrix();
    if (i > 0 && d == cov.deltas[static_cast<std::size_t>(i - 1)].matrix())
      samplers.push_back(samplers.back());
    else
      samplers.emplace_back(cov.gamma, cov.deltas[static_cast<std::size_t>(i)]);
  }
  for (Index i = 0; i < model.tasks(); ++i)
    for (Index t = 0; t < samples; ++t) samplers[static_cast<std::size_t>(i)].sample_into(rng, data.x(i, t));
  data.set_responses(responses(model, data));
  return data;
}

std::pair<CmrModel, TaskDataset> generate_synthetic(Index b, Index p, Index r, Index tasks, Index samples,
                                                    const TaskCovariances& cov, SeededRng& rng) {
  if (r < 1 || r > std::min(b, p)) fail(ErrorKind::ShapeMismatch, "generate_synthetic: require 1 <= r <= min(b, p)");
  if (tasks < 1 || samples < 1) fail(ErrorKind::ShapeMismatch, "generate_synthetic: empty task grid");
  if (cov.bands() != b || cov.positions() != p || cov.tasks() != tasks)
    fail(ErrorKind::ShapeMismatch, "generate_synthetic: covariance shapes do not match");
  CmrModel model = random_model(b, p, r, tasks, rng);
  TaskDataset data = sample_dataset(model, cov, samples, rng);
  return {std::move(model), std::move(data)};
}

std::vector<double> responses(const CmrModel& model, const TaskDataset& data) {
  model.validate();
  if (data.tasks() != model.tasks() || data.bands() != model.bands() || data.positions() != model.positions())
    fail(ErrorKind::ShapeMismatch, "responses: dataset shape does not match the model");
  std::vector<double> y(static_cast<std::size_t>(data.tasks() * data.samples()));
  Matrix u(model.bands(), model.rank());
  for (Index i = 0; i < data.tasks(); ++i) {
    const Matrix& vi = model.v[static_cast<std::size_t>(i)];
    for (Index t = 0; t < data.samples(); ++t) {
      u.noalias() = data.x(i, t) * vi;
      y[static_cast<std::size_t>(i * data.samples() + t)] = model.w.cwiseProduct(u).sum();
    }
  }
  return y;
}

namespace {

void check_shapes(const CmrModel& model, const TaskCovariances& cov) {
  model.validate();
  if (cov.bands() != model.bands() || cov.positions() != model.positions() || cov.tasks() != model.tasks())
    fail(ErrorKind::ShapeMismatch, "covariances do not match the model");
}

}  // namespace

ExpectedA expected_a(const CmrModel& model, const TaskCovariances& cov, Index samples) {
  check_shapes(model, cov);
  if (samples < 1) fail(ErrorKind::ShapeMismatch, "expected_a: samples must be positive");
  const Index r = model.rank();
  const double tasks = static_cast<double>(model.tasks());
  const double t = static_cast<double>(samples);
  const Matrix& gamma = cov.gamma.matrix();

  Matrix q = Matrix::Zero(r, r);
  Matrix weighted = Matrix::Zero(r, r);  // sum_i V_i^T Delta_i V_i tr(Delta_i)
  for (Index i = 0; i < model.tasks(); ++i) {
    const Matrix& vi = model.v[static_cast<std::size_t>(i)];
    const auto& di = cov.deltas[static_cast<std::size_t>(i)];
    const Matrix dv = di.matrix() * vi;
    q.noalias() += dv.transpose() * dv;
    weighted.noalias() += (vi.transpose() * dv) * di.trace();
  }
  q /= tasks;
  weighted /= tasks;

  const Matrix wgw = model.w.transpose() * gamma * model.w;
  ExpectedA out;
  out.q = SymMatrix(q);
  out.beta = std::max(0.0, (wgw * weighted).trace() / t);
  const Matrix gw = gamma * model.w;
  out.a = SymMatrix((1.0 + 1.0 / t) * gw * out.q.matrix() * gw.transpose() + out.beta * gamma);
  return out;
}

double signal_lambda_min(const CmrModel& model, const TaskCovariances& cov, const ExpectedA& expected) {
  const Matrix gw = cov.gamma.matrix() * model.w;
  const auto eig = eig_sym(SymMatrix(gw * expected.q.matrix() * gw.transpose()));
  return eig.values(model.rank() - 1);
}

double davis_kahan_bound(double eps1, double eps2, const CmrModel& model, const TaskCovariances& cov,
                         const ExpectedA& expected) {
  if (!(eps1 >= 0) || !(eps2 >= 0)) fail(ErrorKind::OutOfDomain, "davis_kahan_bound: epsilons must be >= 0");
  if (eps1 >= 1) fail(ErrorKind::OutOfDomain, "davis_kahan_bound: eps1 must be < 1");
  check_shapes(model, cov);
  const double signal = signal_lambda_min(model, cov, expected);
  if (!(signal > 0)) fail(ErrorKind::Degenerate, "davis_kahan_bound: signal eigenvalue is not positive");
  const auto geig = eig_sym(cov.gamma);
  const double gmax = geig.values(0);
  const double gmin = geig.values(geig.values.size() - 1);
  if (!(gmin > 0)) fail(ErrorKind::Degenerate, "davis_kahan_bound: Gamma is singular");
  const double kappa = gmax / gmin;
  const double r = static_cast<double>(model.rank());
  return eps1 / (1.0 - eps1) +
         2.0 * std::sqrt(r) * std::pow((kappa + eps1) / (1.0 - eps1), 1.5) *
             (eps2 + expected.beta * gmin * eps1) / signal;
}

DivergenceCoefficients divergence_coefficients(const CmrModel& model, const TaskCovariances& cov) {
  check_shapes(model, cov);
  DivergenceCoefficients out;
  const auto n = static_cast<double>(model.tasks());
  const double p = static_cast<double>(model.positions());
  const double gnorm = spectral_norm(cov.gamma.matrix());
  const double wnorm = spectral_norm(model.w);

  double sum_l = 0, sum_l2 = 0, sum_l4 = 0, max_l = 0;
  double sum_dnorm2 = 0, max_dnorm = 0, sum_trace = 0;
  for (Index i = 0; i < model.tasks(); ++i) {
    const auto& di = cov.deltas[static_cast<std::size_t>(i)];
    const double dnorm = spectral_norm(di.matrix());
    const double vnorm = spectral_norm(model.v[static_cast<std::size_t>(i)]);
    const double li = gnorm * gnorm * wnorm * wnorm * dnorm * dnorm * vnorm * vnorm;
    out.l_per_task.push_back(li);
    sum_l += li;
    sum_l2 += li * li;
    sum_l4 += li * li * li * li;
    max_l = std::max(max_l, li);
    sum_dnorm2 += dnorm * dnorm;
    max_dnorm = std::max(max_dnorm, dnorm);
    sum_trace += di.trace();
  }
  out.d = sum_l2 / n;
  out.m = std::sqrt(sum_l4 / n);
  out.l = max_l;

  const auto expected = expected_a(model, cov, 1);
  const double signal = signal_lambda_min(model, cov, expected);
  if (!(signal > 0)) fail(ErrorKind::Degenerate, "divergence_coefficients: signal eigenvalue is not positive");
  out.lambda_min_signal = signal;
  out.eta = (sum_l / n) / signal;
  out.alpha = out.d / (signal * signal);
  out.mu = out.m / (signal * signal);
  out.nu = max_l / signal;

  const double mean_trace_per_p = sum_trace / (n * p);
  out.psi = (sum_dnorm2 / n) / (mean_trace_per_p * mean_trace_per_p);
  out.chi = max_dnorm / mean_trace_per_p;

  const auto geig = eig_sym(cov.gamma);
  const double gmin = geig.values(geig.values.size() - 1);
  if (!(gmin > 0)) fail(ErrorKind::Degenerate, "divergence_coefficients: Gamma is singular");
  out.kappa_gamma = geig.values(0) / gmin;
  return out;
}

SymMatrix random_spd(Index dim, double condition, SeededRng& rng) {
  if (!(condition >= 1)) fail(ErrorKind::InvalidArgument, "random_spd: condition must be >= 1");
  Vector lambda(dim);
  for (Index k = 0; k < dim; ++k)
    lambda(k) = dim == 1 ? 1.0 : std::pow(condition, static_cast<double>(k) / static_cast<double>(dim - 1));
  const Matrix basis = random_orthonormal(dim, dim, rng);
  return SymMatrix(basis * lambda.asDiagonal() * basis.transpose());
}

}  // namespace cmr
