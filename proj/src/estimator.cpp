#include "cmr/estimator.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cmr {

double SpectralEstimate::eigengap() const {
  const Index r = w_hat.cols();
  if (r < 1 || r > b_eigenvalues.size()) return 0.0;
  const double next = r < b_eigenvalues.size() ? b_eigenvalues(r) : 0.0;
  return b_eigenvalues(r - 1) - next;
}

void RefineConfig::validate() const {
  if (max_iters < 1) fail(ErrorKind::InvalidArgument, "RefineConfig: max_iters must be >= 1");
  if (!(step_size > 0)) fail(ErrorKind::InvalidArgument, "RefineConfig: step_size must be > 0");
  if (!(grad_tol >= 0)) fail(ErrorKind::InvalidArgument, "RefineConfig: grad_tol must be >= 0");
  if (!(ridge >= 0)) fail(ErrorKind::InvalidArgument, "RefineConfig: ridge must be >= 0");
}

SymMatrix estimate_gamma(const TaskDataset& data) {
  if (data.empty()) fail(ErrorKind::EmptyDataset, "estimate_gamma: empty dataset");
  const auto cols = data.all_columns();
  Matrix g = Matrix::Zero(data.bands(), data.bands());
  g.selfadjointView<Eigen::Lower>().rankUpdate(cols);
  g = g.selfadjointView<Eigen::Lower>();
  g /= static_cast<double>(data.tasks() * data.samples() * data.positions());
  return SymMatrix(g);
}

SymMatrix estimate_a(const TaskDataset& data) {
  if (data.empty()) fail(ErrorKind::EmptyDataset, "estimate_a: empty dataset");
  data.validate();
  const double t = static_cast<double>(data.samples());
  // Stack Z_i side by side: A_hat = (1 / I) [Z_1 ... Z_I][Z_1 ... Z_I]^T.
  Matrix z = Matrix::Zero(data.bands(), data.tasks() * data.positions());
  for (Index i = 0; i < data.tasks(); ++i) {
    auto zi = z.middleCols(i * data.positions(), data.positions());
    for (Index s = 0; s < data.samples(); ++s) zi.noalias() += data.y(i, s) * data.x(i, s);
    zi /= t;
  }
  Matrix a = Matrix::Zero(data.bands(), data.bands());
  a.selfadjointView<Eigen::Lower>().rankUpdate(z);
  a = a.selfadjointView<Eigen::Lower>();
  a /= static_cast<double>(data.tasks());
  return SymMatrix(a);
}

namespace {

void check_rank_request(const TaskDataset& data, Index r, bool enforce) {
  if (r < 1) fail(ErrorKind::RankRequest, "spectral step: r must be >= 1");
  if (r > data.bands()) fail(ErrorKind::RankRequest, "spectral step: r exceeds B");
  if (enforce && r > data.samples()) fail(ErrorKind::RankRequest, "spectral step: r exceeds T");
}

}  // namespace

SpectralEstimate spectral_from_moments(const SymMatrix& gamma_hat, const SymMatrix& a_hat, Index r,
                                       double eig_floor) {
  if (gamma_hat.dim() != a_hat.dim()) fail(ErrorKind::ShapeMismatch, "spectral step: moment sizes differ");
  if (r < 1 || r > a_hat.dim()) fail(ErrorKind::RankRequest, "spectral step: r out of range");
  const double floor = eig_floor > 0 ? eig_floor : default_eig_floor(gamma_hat);
  const SymMatrix whitener = inv_sqrt_psd(gamma_hat, floor);
  SpectralEstimate est;
  est.gamma_hat = gamma_hat;
  est.a_hat = a_hat;
  est.b_hat = SymMatrix(whitener.matrix() * a_hat.matrix() * whitener.matrix());
  const auto eig = eig_sym(est.b_hat);
  est.b_eigenvalues = eig.values;
  est.w_hat = whitener.matrix() * leading_eigenvectors(eig, r);
  return est;
}

SpectralEstimate spectral_cmr(const TaskDataset& data, Index r, double eig_floor, bool enforce_rank) {
  check_rank_request(data, r, enforce_rank);
  return spectral_from_moments(estimate_gamma(data), estimate_a(data), r, eig_floor);
}

SpectralEstimate spectral_cmr_nw(const TaskDataset& data, Index r, bool enforce_rank) {
  check_rank_request(data, r, enforce_rank);
  SpectralEstimate est;
  est.gamma_hat = SymMatrix::identity(data.bands());
  est.a_hat = estimate_a(data);
  est.b_hat = est.a_hat;
  const auto eig = eig_sym(est.b_hat);
  est.b_eigenvalues = eig.values;
  est.w_hat = leading_eigenvectors(eig, r);
  return est;
}

Vector ridge_solve(const Matrix& features, const Vector& targets, double ridge) {
  if (features.rows() != targets.size()) fail(ErrorKind::ShapeMismatch, "ridge_solve: row count mismatch");
  if (!(ridge >= 0)) fail(ErrorKind::InvalidArgument, "ridge_solve: ridge must be >= 0");
  const Index n = features.rows();
  const Index d = features.cols();
  if (ridge == 0.0) return features.completeOrthogonalDecomposition().solve(targets);
  if (d <= n) {
    Matrix gram = features.transpose() * features;
    gram.diagonal().array() += ridge;
    return gram.llt().solve(features.transpose() * targets);
  }
  // Dual form: F^T (F F^T + ridge I)^{-1} y.
  Matrix kernel = features * features.transpose();
  kernel.diagonal().array() += ridge;
  return features.transpose() * kernel.llt().solve(targets);
}

Matrix fit_local(const Matrix& w, const TaskDataset& data, Index task, double ridge) {
  if (w.rows() != data.bands()) fail(ErrorKind::ShapeMismatch, "fit_local: W has the wrong number of rows");
  if (task < 0 || task >= data.tasks()) fail(ErrorKind::ShapeMismatch, "fit_local: task index out of range");
  if (data.samples() < 1) fail(ErrorKind::ShapeMismatch, "fit_local: task has no samples");
  const Index p = data.positions();
  const Index r = w.cols();
  // Row t holds vec(X_t^T W); tr(W^T X V) = <vec(V), vec(X^T W)>.
  Matrix features(data.samples(), p * r);
  Vector targets(data.samples());
  Matrix xtw(p, r);
  for (Index t = 0; t < data.samples(); ++t) {
    xtw.noalias() = data.x(task, t).transpose() * w;
    features.row(t) = Eigen::Map<const Vector>(xtw.data(), p * r).transpose();
    targets(t) = data.y(task, t);
  }
  const Vector solution = ridge_solve(features, targets, ridge);
  return Eigen::Map<const Matrix>(solution.data(), p, r);
}

std::vector<Matrix> fit_local_all(const Matrix& w, const TaskDataset& data, double ridge) {
  std::vector<Matrix> v;
  v.reserve(static_cast<std::size_t>(data.tasks()));
  for (Index i = 0; i < data.tasks(); ++i) v.push_back(fit_local(w, data, i, ridge));
  return v;
}

namespace {

void check_parameters(const Matrix& w, const std::vector<Matrix>& v, const TaskDataset& data) {
  if (w.rows() != data.bands() || static_cast<Index>(v.size()) != data.tasks())
    fail(ErrorKind::ShapeMismatch, "refine: parameter shapes do not match the dataset");
  for (const auto& vi : v)
    if (vi.rows() != data.positions() || vi.cols() != w.cols())
      fail(ErrorKind::ShapeMismatch, "refine: V_i has the wrong shape");
}

double squared_norm(const Matrix& w, const std::vector<Matrix>& v) {
  double s = w.squaredNorm();
  for (const auto& vi : v) s += vi.squaredNorm();
  return s;
}

// Every quantity the objective needs is a contraction of the B x (ITP) data
// matrix M with a B x R or (ITP) x R operand, so each pass over the data is a
// single GEMM. Row block k*P..k*P+P-1 of M^T W is X_k^T W for sample k = i*T+t.
class BilinearPasses {
 public:
  explicit BilinearPasses(const TaskDataset& data) : data_(data), m_(data.all_columns()) {}

  Matrix project(const Matrix& w) const { return m_.transpose() * w; }

  // <X_k^T W, V_i> for every sample.
  Vector predictions(const Matrix& projected, const std::vector<Matrix>& v) const {
    const Index p = data_.positions();
    Vector pred(data_.tasks() * data_.samples());
    for (Index i = 0; i < data_.tasks(); ++i) {
      const Matrix& vi = v[static_cast<std::size_t>(i)];
      for (Index t = 0; t < data_.samples(); ++t) {
        const Index k = i * data_.samples() + t;
        pred(k) = projected.middleRows(k * p, p).cwiseProduct(vi).sum();
      }
    }
    return pred;
  }

  // sum_t weight_k X_k^T W for each task.
  std::vector<Matrix> task_sums(const Matrix& projected, const Vector& weight) const {
    const Index p = data_.positions();
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(data_.tasks()));
    for (Index i = 0; i < data_.tasks(); ++i) {
      Matrix acc = Matrix::Zero(p, projected.cols());
      for (Index t = 0; t < data_.samples(); ++t) {
        const Index k = i * data_.samples() + t;
        acc.noalias() += weight(k) * projected.middleRows(k * p, p);
      }
      out.push_back(std::move(acc));
    }
    return out;
  }

  // sum_k weight_k X_k V_i.
  Matrix band_sum(const Vector& weight, const std::vector<Matrix>& v) const {
    const Index p = data_.positions();
    Matrix coeff(m_.cols(), v.front().cols());
    for (Index i = 0; i < data_.tasks(); ++i) {
      const Matrix& vi = v[static_cast<std::size_t>(i)];
      for (Index t = 0; t < data_.samples(); ++t) {
        const Index k = i * data_.samples() + t;
        coeff.middleRows(k * p, p) = weight(k) * vi;
      }
    }
    return m_ * coeff;
  }

  Vector residuals(const Vector& pred) const {
    return Eigen::Map<const Vector>(data_.responses().data(), pred.size()) - pred;
  }

 private:
  const TaskDataset& data_;
  Eigen::Map<const Matrix> m_;
};

}  // namespace

double refine_objective(const Matrix& w, const std::vector<Matrix>& v, const TaskDataset& data, double ridge) {
  check_parameters(w, v, data);
  BilinearPasses passes(data);
  const Vector resid = passes.residuals(passes.predictions(passes.project(w), v));
  const double penalty = ridge == 0.0 ? 0.0 : ridge * squared_norm(w, v);
  return resid.squaredNorm() / static_cast<double>(resid.size()) + penalty;
}

double ObjectiveGradient::squared_norm() const { return cmr::squared_norm(w, v); }

namespace {

ObjectiveGradient gradient_from_projection(const BilinearPasses& passes, const Matrix& projected, const Matrix& w,
                                           const std::vector<Matrix>& v, double ridge) {
  const Vector resid = passes.residuals(passes.predictions(projected, v));
  const double n = static_cast<double>(resid.size());
  const Vector weight = (-2.0 / n) * resid;
  ObjectiveGradient g;
  g.loss = resid.squaredNorm() / n + (ridge == 0.0 ? 0.0 : ridge * squared_norm(w, v));
  g.w = passes.band_sum(weight, v);
  g.v = passes.task_sums(projected, weight);
  if (ridge != 0.0) {
    g.w += 2.0 * ridge * w;
    for (std::size_t i = 0; i < v.size(); ++i) g.v[i] += 2.0 * ridge * v[i];
  }
  return g;
}

}  // namespace

ObjectiveGradient refine_gradient(const Matrix& w, const std::vector<Matrix>& v, const TaskDataset& data,
                                  double ridge) {
  check_parameters(w, v, data);
  BilinearPasses passes(data);
  return gradient_from_projection(passes, passes.project(w), w, v, ridge);
}

FitResult refine_gd(const Matrix& init_w, const std::vector<Matrix>& init_v, const TaskDataset& data,
                    const RefineConfig& cfg) {
  cfg.validate();
  check_parameters(init_w, init_v, data);
  if (data.empty()) fail(ErrorKind::EmptyDataset, "refine_gd: empty dataset");
  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1e-20;
  constexpr int kRefreshEvery = 20;

  const BilinearPasses passes(data);
  const double n = static_cast<double>(data.tasks() * data.samples());
  // V_i only sees 1/I of the samples; its block of the descent direction is
  // scaled by I so both blocks have comparable curvature.
  const double v_scale = cfg.task_scaled_steps ? static_cast<double>(data.tasks()) : 1.0;

  FitResult out;
  out.w = init_w;
  out.v = init_v;
  Matrix projected = passes.project(out.w);
  auto grad = gradient_from_projection(passes, projected, out.w, out.v, cfg.ridge);
  if (!std::isfinite(grad.loss)) fail(ErrorKind::Diverged, "refine_gd: initial loss is not finite");
  out.loss_history.push_back(grad.loss);

  double step = cfg.step_size;
  std::vector<Matrix> dir_v(out.v.size());
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const double gnorm2 = grad.squared_norm();
    if (std::sqrt(gnorm2) <= cfg.grad_tol) {
      out.converged = true;
      break;
    }
    // Direction D = (gW, v_scale * gV). Along (W - sD_W, V - sD_V) every
    // prediction is a quadratic in s, so the loss is an exact quartic.
    const Matrix& dir_w = grad.w;
    for (std::size_t i = 0; i < dir_v.size(); ++i) dir_v[i] = v_scale * grad.v[i];
    const Matrix projected_dir = passes.project(dir_w);
    const Vector resid = passes.residuals(passes.predictions(projected, out.v));
    Vector lin(resid.size());
    Vector quad(resid.size());
    {
      const Vector a_xv = passes.predictions(projected_dir, out.v);
      const Vector w_xd = passes.predictions(projected, dir_v);
      lin = a_xv + w_xd;
      quad = passes.predictions(projected_dir, dir_v);
    }
    // residual(s) = resid + s * lin - s^2 * quad
    const double c0 = resid.squaredNorm() / n;
    const double c1 = 2.0 * resid.dot(lin) / n;
    const double c2 = (lin.squaredNorm() - 2.0 * resid.dot(quad)) / n;
    const double c3 = -2.0 * lin.dot(quad) / n;
    const double c4 = quad.squaredNorm() / n;
    double p0 = 0, p1 = 0, p2 = 0;
    if (cfg.ridge != 0.0) {
      p0 = squared_norm(out.w, out.v);
      p1 = -2.0 * out.w.cwiseProduct(dir_w).sum();
      p2 = dir_w.squaredNorm();
      for (std::size_t i = 0; i < dir_v.size(); ++i) {
        p1 -= 2.0 * out.v[i].cwiseProduct(dir_v[i]).sum();
        p2 += dir_v[i].squaredNorm();
      }
    }
    const auto loss_at = [&](double s) {
      return c0 + s * (c1 + s * (c2 + s * (c3 + s * c4))) + cfg.ridge * (p0 + s * (p1 + s * p2));
    };
    const double slope = gnorm2 + (v_scale - 1.0) * [&] {
      double sv = 0;
      for (const auto& gv : grad.v) sv += gv.squaredNorm();
      return sv;
    }();

    bool accepted = false;
    while (step >= kMinStep) {
      const double trial = loss_at(step);
      if (std::isfinite(trial) && trial <= grad.loss - kArmijo * step * slope) {
        Matrix next_w = out.w - step * dir_w;
        std::vector<Matrix> next_v(out.v.size());
        for (std::size_t i = 0; i < out.v.size(); ++i) next_v[i] = out.v[i] - step * dir_v[i];
        Matrix next_projected = (iter + 1) % kRefreshEvery == 0 ? passes.project(next_w)
                                                                 : Matrix(projected - step * projected_dir);
        auto next_grad = gradient_from_projection(passes, next_projected, next_w, next_v, cfg.ridge);
        // The quartic is exact up to roundoff; the recomputed loss decides.
        if (std::isfinite(next_grad.loss) && next_grad.loss <= grad.loss) {
          out.w = std::move(next_w);
          out.v = std::move(next_v);
          projected = std::move(next_projected);
          grad = std::move(next_grad);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
    ++out.iterations;
    out.loss_history.push_back(grad.loss);
    step *= 2.0;
  }
  if (!std::isfinite(grad.loss)) fail(ErrorKind::Diverged, "refine_gd: loss became non-finite");
  if (!out.converged && std::sqrt(grad.squared_norm()) <= cfg.grad_tol) out.converged = true;
  return out;
}

FitResult fit_cmr(const TaskDataset& data, Index r, const RefineConfig& cfg, double eig_floor) {
  const auto est = spectral_cmr(data, r, eig_floor);
  return refine_gd(est.w_hat, fit_local_all(est.w_hat, data, cfg.ridge), data, cfg);
}

FitResult cmr1(const TaskDataset& single_task, Index r, const RefineConfig& cfg) {
  if (single_task.tasks() != 1) fail(ErrorKind::ShapeMismatch, "cmr1: expects a single-task dataset");
  return fit_cmr(single_task, r, cfg);
}

std::vector<Vector> frr_baseline(const std::vector<Matrix>& features, const std::vector<Vector>& labels,
                                 double ridge) {
  if (features.size() != labels.size()) fail(ErrorKind::ShapeMismatch, "frr_baseline: task counts differ");
  std::vector<Vector> weights;
  weights.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) weights.push_back(ridge_solve(features[i], labels[i], ridge));
  return weights;
}

}  // namespace cmr
