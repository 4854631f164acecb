#include "cmr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cmr/parallel.hpp"

namespace cmr {

std::string init_mode_name(InitMode mode) { return mode == InitMode::Spectral ? "spectral" : "random"; }

InitMode parse_init_mode(const std::string& name) {
  if (name == "spectral") return InitMode::Spectral;
  if (name == "random") return InitMode::Random;
  fail(ErrorKind::Config, "init_mode must be \"spectral\" or \"random\", got \"" + name + "\"");
}

TaskCovariances CovarianceSpec::draw(Index b, Index p, Index tasks, SeededRng& rng) const {
  if (gamma_condition == 1.0 && delta_condition == 1.0) return TaskCovariances::identity(b, p, tasks);
  SymMatrix gamma = gamma_condition == 1.0 ? SymMatrix::identity(b) : random_spd(b, gamma_condition, rng);
  std::vector<SymMatrix> deltas;
  deltas.reserve(static_cast<std::size_t>(tasks));
  for (Index i = 0; i < tasks; ++i)
    deltas.push_back(delta_condition == 1.0 ? SymMatrix::identity(p) : random_spd(p, delta_condition, rng));
  return TaskCovariances::make(std::move(gamma), std::move(deltas), true);
}

namespace {

void check_refine(const RefineConfig& refine) {
  try {
    refine.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
}

void check_threshold(double threshold) {
  if (!(threshold > 0 && threshold < 1)) fail(ErrorKind::Config, "success_threshold must lie in (0, 1)");
}

void check_dims(Index b, Index p, Index r) {
  if (b < 1 || p < 1 || r < 1 || r > std::min(b, p)) fail(ErrorKind::Config, "require 1 <= r <= min(b, p)");
}

void check_covariance(const CovarianceSpec& c) {
  if (!(c.gamma_condition >= 1) || !(c.delta_condition >= 1))
    fail(ErrorKind::Config, "covariance condition numbers must be >= 1");
}

}  // namespace

void PhaseGridConfig::validate() const {
  check_dims(b, p, r);
  if (i_values.empty() || t_values.empty()) fail(ErrorKind::Config, "grid axes must be non-empty");
  for (auto v : i_values)
    if (v < 1) fail(ErrorKind::Config, "i_values must be >= 1");
  for (auto v : t_values)
    if (v < 1) fail(ErrorKind::Config, "t_values must be >= 1");
  if (trials_per_cell < 1) fail(ErrorKind::Config, "trials_per_cell must be >= 1");
  check_threshold(success_threshold);
  check_covariance(covariance);
  check_refine(refine);
}

void BSweepConfig::validate() const {
  if (b_values.empty()) fail(ErrorKind::Config, "b_values must be non-empty");
  for (auto b : b_values) check_dims(b, p, r);
  if (tasks < 1 || samples < 1) fail(ErrorKind::Config, "tasks and samples must be >= 1");
  if (trials_per_cell < 1) fail(ErrorKind::Config, "trials_per_cell must be >= 1");
  check_threshold(success_threshold);
  check_covariance(covariance);
  check_refine(refine);
}

void ConcentrationConfig::validate() const {
  check_dims(b, p, r);
  if (samples < 1) fail(ErrorKind::Config, "samples must be >= 1");
  if (task_sweep.empty()) fail(ErrorKind::Config, "task_sweep must be non-empty");
  for (auto v : task_sweep)
    if (v < 1) fail(ErrorKind::Config, "task_sweep values must be >= 1");
  if (repetitions < 1 || mean_check_datasets < 1 || mean_check_tasks < 1)
    fail(ErrorKind::Config, "repetitions, mean_check_tasks and mean_check_datasets must be >= 1");
  check_covariance(covariance);
}

void BoundTrialConfig::validate() const {
  check_dims(b, p, r);
  if (tasks < 1 || samples < 1 || trials < 1) fail(ErrorKind::Config, "tasks, samples and trials must be >= 1");
  check_covariance(covariance);
}

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t row, std::uint64_t col, std::uint64_t trial) {
  return derive_seed(master, {row, col, trial});
}

bool recovery_success(Index r, double dist, double sq_corr, double threshold) {
  if (!std::isfinite(dist) || !std::isfinite(sq_corr)) return false;
  if (r == 1) return sq_corr > threshold;
  return dist < std::sqrt(1.0 - threshold);
}

TrialRecord run_recovery_trial(Index b, Index p, Index r, Index tasks, Index samples, const CovarianceSpec& cov,
                               std::uint64_t seed, InitMode mode, const RefineConfig& refine, double threshold) {
  TrialRecord rec;
  rec.cell_b = b;
  rec.cell_i = tasks;
  rec.cell_t = samples;
  rec.seed = seed;
  try {
    SeededRng rng(seed);
    const auto covariances = cov.draw(b, p, tasks, rng);
    const auto [model, data] = generate_synthetic(b, p, r, tasks, samples, covariances, rng);
    Matrix w0;
    std::vector<Matrix> v0;
    if (mode == InitMode::Spectral) {
      w0 = spectral_cmr(data, r).w_hat;
      v0 = fit_local_all(w0, data, refine.ridge);
    } else {
      const auto start = random_model(b, p, r, tasks, rng);
      w0 = start.w;
      v0 = start.v;
    }
    const auto fit = refine_gd(w0, v0, data, refine);
    rec.dist = subspace_distance(fit.w, model.w);
    rec.sq_corr = r == 1 ? squared_correlation(fit.w.col(0), model.w.col(0)) : 1.0 - rec.dist * rec.dist;
    rec.success = recovery_success(r, rec.dist, rec.sq_corr, threshold);
  } catch (const Error& e) {
    rec.error_kind = std::string(error_kind_name(e.kind()));
    rec.dist = std::numeric_limits<double>::quiet_NaN();
    rec.sq_corr = std::numeric_limits<double>::quiet_NaN();
    rec.success = false;
  }
  return rec;
}

PhaseDiagramResult run_phase_diagram(const PhaseGridConfig& cfg, unsigned threads) {
  cfg.validate();
  const std::size_t rows = cfg.i_values.size();
  const std::size_t cols = cfg.t_values.size();
  const auto per_cell = static_cast<std::size_t>(cfg.trials_per_cell);
  PhaseDiagramResult out;
  out.config = cfg;
  out.trials.resize(rows * cols * per_cell);
  // Largest cells first keeps workers busy until the end.
  std::vector<std::size_t> order(out.trials.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  const auto cost = [&](std::size_t k) {
    const std::size_t cell = k / per_cell;
    return cfg.i_values[cell / cols] * cfg.t_values[cell % cols];
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cost(a) > cost(b); });
  parallel_for(order.size(), threads, [&](std::size_t slot) {
    const std::size_t k = order[slot];
    const std::size_t cell = k / per_cell;
    const std::size_t row = cell / cols;
    const std::size_t col = cell % cols;
    const std::size_t trial = k % per_cell;
    auto rec = run_recovery_trial(cfg.b, cfg.p, cfg.r, cfg.i_values[row], cfg.t_values[col], cfg.covariance,
                                  trial_seed(cfg.master_seed, row, col, trial), cfg.init_mode, cfg.refine,
                                  cfg.success_threshold);
    rec.trial = static_cast<int>(trial);
    out.trials[k] = std::move(rec);
  });
  out.success_rate = Matrix::Zero(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t k = 0; k < out.trials.size(); ++k) {
    const std::size_t cell = k / per_cell;
    if (out.trials[k].success)
      out.success_rate(static_cast<Index>(cell / cols), static_cast<Index>(cell % cols)) += 1.0;
  }
  out.success_rate /= static_cast<double>(per_cell);
  return out;
}

namespace {

double median_of(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Linear-interpolated empirical quantile.
double quantile_of(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace

BSweepResult run_b_sweep(const BSweepConfig& cfg, unsigned threads) {
  cfg.validate();
  const auto per_cell = static_cast<std::size_t>(cfg.trials_per_cell);
  BSweepResult out;
  out.config = cfg;
  out.trials.resize(cfg.b_values.size() * per_cell);
  parallel_for(out.trials.size(), threads, [&](std::size_t k) {
    const std::size_t cell = k / per_cell;
    const std::size_t trial = k % per_cell;
    auto rec = run_recovery_trial(cfg.b_values[cell], cfg.p, cfg.r, cfg.tasks, cfg.samples, cfg.covariance,
                                  trial_seed(cfg.master_seed, cell, 0, trial), cfg.init_mode, cfg.refine,
                                  cfg.success_threshold);
    rec.trial = static_cast<int>(trial);
    out.trials[k] = std::move(rec);
  });
  for (std::size_t cell = 0; cell < cfg.b_values.size(); ++cell) {
    double successes = 0;
    std::vector<double> dists;
    for (std::size_t trial = 0; trial < per_cell; ++trial) {
      const auto& rec = out.trials[cell * per_cell + trial];
      successes += rec.success ? 1.0 : 0.0;
      dists.push_back(rec.error_kind.empty() ? rec.dist : 1.0);
    }
    out.success_rate.push_back(successes / static_cast<double>(per_cell));
    out.median_dist.push_back(median_of(dists));
  }
  return out;
}

MonotonicityCount count_monotonicity_violations(const Matrix& rate) {
  MonotonicityCount out;
  for (Index c = 0; c < rate.cols(); ++c)
    for (Index r = 0; r + 1 < rate.rows(); ++r) {
      ++out.pairs;
      if (rate(r + 1, c) < rate(r, c)) ++out.violations;
    }
  for (Index r = 0; r < rate.rows(); ++r)
    for (Index c = 0; c + 1 < rate.cols(); ++c) {
      ++out.pairs;
      if (rate(r, c + 1) < rate(r, c)) ++out.violations;
    }
  return out;
}

bool halving_ratio_ok(double ratio, double tolerance) {
  return std::isfinite(ratio) && ratio >= 2.0 / tolerance && ratio <= 2.0 * tolerance;
}

namespace {

struct Problem {
  CmrModel model;
  TaskCovariances cov;
};

Problem master_problem(const ConcentrationConfig& cfg, Index tasks) {
  SeededRng rng(derive_seed(cfg.master_seed, {0}));
  Problem out;
  out.model = random_model(cfg.b, cfg.p, cfg.r, tasks, rng);
  out.cov = cfg.covariance.draw(cfg.b, cfg.p, tasks, rng);
  return out;
}

Problem first_tasks(const Problem& full, Index tasks) {
  Problem out;
  out.model.w = full.model.w;
  out.model.v.assign(full.model.v.begin(), full.model.v.begin() + tasks);
  out.cov.gamma = full.cov.gamma;
  out.cov.deltas.assign(full.cov.deltas.begin(), full.cov.deltas.begin() + tasks);
  out.cov.trace_normalized = full.cov.trace_normalized;
  return out;
}

template <class ErrorFn>
ConcentrationReport sweep(const ConcentrationConfig& cfg, unsigned threads, const std::string& quantity,
                          std::uint64_t stream, Index count_per_task, ErrorFn&& error_of) {
  const Index max_tasks = std::max(*std::max_element(cfg.task_sweep.begin(), cfg.task_sweep.end()),
                                   cfg.mean_check_tasks);
  const Problem full = master_problem(cfg, max_tasks);
  ConcentrationReport report;
  report.quantity = quantity;
  const auto reps = static_cast<std::size_t>(cfg.repetitions);
  std::vector<double> errors(cfg.task_sweep.size() * reps);
  parallel_for(errors.size(), threads, [&](std::size_t k) {
    const std::size_t point = k / reps;
    const Problem sub = first_tasks(full, cfg.task_sweep[point]);
    SeededRng rng(derive_seed(cfg.master_seed, {stream, point, k % reps}));
    const auto data = sample_dataset(sub.model, sub.cov, cfg.samples, rng);
    errors[k] = error_of(sub, data);
  });
  for (std::size_t point = 0; point < cfg.task_sweep.size(); ++point) {
    SweepPoint sp;
    sp.tasks = cfg.task_sweep[point];
    sp.sample_count = sp.tasks * cfg.samples * count_per_task;
    sp.errors.assign(errors.begin() + static_cast<std::ptrdiff_t>(point * reps),
                     errors.begin() + static_cast<std::ptrdiff_t>((point + 1) * reps));
    sp.median = median_of(sp.errors);
    sp.q10 = quantile_of(sp.errors, 0.1);
    sp.q90 = quantile_of(sp.errors, 0.9);
    report.points.push_back(std::move(sp));
  }
  report.rate_ok = report.points.size() >= 2;
  for (std::size_t k = 0; k + 1 < report.points.size(); ++k) {
    const double ratio = report.points[k].median / report.points[k + 1].median;
    report.halving_ratios.push_back(ratio);
    const bool quadrupled = report.points[k + 1].tasks == 4 * report.points[k].tasks;
    report.rate_ok = report.rate_ok && quadrupled && halving_ratio_ok(ratio);
  }
  return report;
}

}  // namespace

ConcentrationReport verify_lemma1(const ConcentrationConfig& cfg, unsigned threads) {
  cfg.validate();
  auto report = sweep(cfg, threads, "a_hat", 1, 1, [&](const Problem& sub, const TaskDataset& data) {
    const auto expected = expected_a(sub.model, sub.cov, cfg.samples);
    return spectral_norm(estimate_a(data).matrix() - expected.a.matrix());
  });

  const Problem full = master_problem(cfg, std::max(*std::max_element(cfg.task_sweep.begin(), cfg.task_sweep.end()),
                                                    cfg.mean_check_tasks));
  const Problem sub = first_tasks(full, cfg.mean_check_tasks);
  const auto expected = expected_a(sub.model, sub.cov, cfg.samples);
  std::vector<Matrix> estimates(static_cast<std::size_t>(cfg.mean_check_datasets));
  parallel_for(estimates.size(), threads, [&](std::size_t k) {
    SeededRng rng(derive_seed(cfg.master_seed, {3, k}));
    estimates[k] = estimate_a(sample_dataset(sub.model, sub.cov, cfg.samples, rng)).matrix();
  });
  Matrix mean = Matrix::Zero(cfg.b, cfg.b);
  for (const auto& e : estimates) mean += e;
  mean /= static_cast<double>(estimates.size());
  report.mean_relative_error =
      spectral_norm(mean - expected.a.matrix()) / spectral_norm(expected.a.matrix());
  return report;
}

ConcentrationReport verify_lemma2(const ConcentrationConfig& cfg, unsigned threads) {
  cfg.validate();
  return sweep(cfg, threads, "gamma_hat", 2, cfg.p, [&](const Problem& sub, const TaskDataset& data) {
    return spectral_norm(estimate_gamma(data).matrix() - sub.cov.gamma.matrix());
  });
}

BoundReport verify_lemma3(const BoundTrialConfig& cfg, unsigned threads) {
  cfg.validate();
  BoundReport report;
  report.config = cfg;
  report.trials.resize(static_cast<std::size_t>(cfg.trials));
  parallel_for(report.trials.size(), threads, [&](std::size_t k) {
    BoundTrial bt;
    bt.trial = static_cast<int>(k);
    bt.seed = trial_seed(cfg.master_seed, 0, 0, k);
    SeededRng rng(bt.seed);
    const auto cov = cfg.covariance.draw(cfg.b, cfg.p, cfg.tasks, rng);
    const auto [model, data] = generate_synthetic(cfg.b, cfg.p, cfg.r, cfg.tasks, cfg.samples, cov, rng);
    const auto gamma_hat = estimate_gamma(data);
    const auto a_hat = estimate_a(data);
    const auto expected = expected_a(model, cov, cfg.samples);
    bt.eps1 = spectral_norm(gamma_hat.matrix() - cov.gamma.matrix()) / min_eigenvalue(cov.gamma);
    bt.eps2 = spectral_norm(a_hat.matrix() - expected.a.matrix());
    bt.valid = bt.eps1 < 1.0;
    // eps1 >= 1 admits a singular Gamma_hat, so the estimate may not exist.
    try {
      bt.dist = subspace_distance(spectral_from_moments(gamma_hat, a_hat, cfg.r).w_hat, model.w);
    } catch (const Error&) {
      if (bt.valid) throw;
      bt.dist = std::numeric_limits<double>::quiet_NaN();
    }
    if (bt.valid) {
      bt.bound = davis_kahan_bound(bt.eps1, bt.eps2, model, cov, expected);
      bt.violated = bt.dist > bt.bound;
    } else {
      bt.bound = std::numeric_limits<double>::quiet_NaN();
    }
    report.trials[k] = bt;
  });
  for (const auto& t : report.trials) {
    report.valid += t.valid ? 1 : 0;
    report.excluded += t.valid ? 0 : 1;
    report.violations += t.violated ? 1 : 0;
  }
  return report;
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  check_dims(cfg.b, cfg.p, cfg.r);
  if (!(cfg.step > 0) || cfg.instances < 1) fail(ErrorKind::Config, "gradcheck: step > 0 and instances >= 1");
  GradcheckReport report;
  for (int inst = 0; inst < cfg.instances; ++inst) {
    SeededRng rng(derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(inst)}));
    const auto cov = TaskCovariances::identity(cfg.b, cfg.p, cfg.tasks);
    const auto data = generate_synthetic(cfg.b, cfg.p, cfg.r, cfg.tasks, cfg.samples, cov, rng).second;
    // Evaluate away from the optimum so residuals are non-zero.
    Matrix w = rng.normal_matrix(cfg.b, cfg.r);
    std::vector<Matrix> v;
    for (Index i = 0; i < cfg.tasks; ++i) v.push_back(rng.normal_matrix(cfg.p, cfg.r));
    const auto grad = refine_gradient(w, v, data, cfg.ridge);

    double worst = 0.0;
    const auto compare = [&](double analytic, double numeric) {
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    const auto central = [&](double& coord) {
      const double saved = coord;
      coord = saved + cfg.step;
      const double up = refine_objective(w, v, data, cfg.ridge);
      coord = saved - cfg.step;
      const double down = refine_objective(w, v, data, cfg.ridge);
      coord = saved;
      return (up - down) / (2.0 * cfg.step);
    };
    for (Index k = 0; k < w.size(); ++k) compare(grad.w(k), central(w(k)));
    for (std::size_t i = 0; i < v.size(); ++i)
      for (Index k = 0; k < v[i].size(); ++k) compare(grad.v[i](k), central(v[i](k)));
    report.max_relative_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

void write_trial_fields(std::ostringstream& os, const TrialRecord& t) {
  os << t.cell_i << ',' << t.cell_t << ',' << t.trial << ',' << t.seed << ',' << format_double(t.dist) << ','
     << format_double(t.sq_corr) << ',' << (t.success ? 1 : 0) << ',' << t.error_kind << '\n';
}

}  // namespace

std::string phase_trials_csv(const PhaseDiagramResult& result) {
  std::ostringstream os;
  os << "cell_i,cell_t,trial,seed,dist,sq_corr,success,error_kind\n";
  for (const auto& t : result.trials) write_trial_fields(os, t);
  return os.str();
}

std::string phase_summary_csv(const PhaseDiagramResult& result) {
  std::ostringstream os;
  os << "i,t,trials,successes,success_rate\n";
  const auto& cfg = result.config;
  for (std::size_t r = 0; r < cfg.i_values.size(); ++r)
    for (std::size_t c = 0; c < cfg.t_values.size(); ++c) {
      const double rate = result.success_rate(static_cast<Index>(r), static_cast<Index>(c));
      os << cfg.i_values[r] << ',' << cfg.t_values[c] << ',' << cfg.trials_per_cell << ','
         << static_cast<long>(std::lround(rate * cfg.trials_per_cell)) << ',' << format_double(rate) << '\n';
    }
  return os.str();
}

std::string phase_heatmap_pgm(const PhaseDiagramResult& result) {
  const Index rows = result.success_rate.rows();
  const Index cols = result.success_rate.cols();
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  // i_values are stored ascending as configured; the image puts the largest I on top.
  std::vector<std::size_t> row_order(static_cast<std::size_t>(rows));
  for (std::size_t k = 0; k < row_order.size(); ++k) row_order[k] = k;
  std::stable_sort(row_order.begin(), row_order.end(), [&](auto a, auto b) {
    return result.config.i_values[a] > result.config.i_values[b];
  });
  std::vector<std::size_t> col_order(static_cast<std::size_t>(cols));
  for (std::size_t k = 0; k < col_order.size(); ++k) col_order[k] = k;
  std::stable_sort(col_order.begin(), col_order.end(), [&](auto a, auto b) {
    return result.config.t_values[a] < result.config.t_values[b];
  });
  for (auto r : row_order)
    for (auto c : col_order) {
      const double rate = result.success_rate(static_cast<Index>(r), static_cast<Index>(c));
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(rate, 0.0, 1.0)))));
    }
  return out;
}

std::string b_sweep_trials_csv(const BSweepResult& result) {
  std::ostringstream os;
  os << "cell_b,cell_i,cell_t,trial,seed,dist,sq_corr,success,error_kind\n";
  for (const auto& t : result.trials) {
    os << t.cell_b << ',';
    write_trial_fields(os, t);
  }
  return os.str();
}

std::string b_sweep_summary_csv(const BSweepResult& result) {
  std::ostringstream os;
  os << "b,i,t,trials,success_rate,median_dist\n";
  const auto& cfg = result.config;
  for (std::size_t k = 0; k < cfg.b_values.size(); ++k)
    os << cfg.b_values[k] << ',' << cfg.tasks << ',' << cfg.samples << ',' << cfg.trials_per_cell << ','
       << format_double(result.success_rate[k]) << ',' << format_double(result.median_dist[k]) << '\n';
  return os.str();
}

std::string concentration_csv(const ConcentrationReport& report) {
  std::ostringstream os;
  os << "quantity,tasks,sample_count,repetitions,median,q10,q90,halving_ratio\n";
  for (std::size_t k = 0; k < report.points.size(); ++k) {
    const auto& p = report.points[k];
    os << report.quantity << ',' << p.tasks << ',' << p.sample_count << ',' << p.errors.size() << ','
       << format_double(p.median) << ',' << format_double(p.q10) << ',' << format_double(p.q90) << ','
       << (k == 0 ? std::string() : format_double(report.halving_ratios[k - 1])) << '\n';
  }
  return os.str();
}

std::string bound_trials_csv(const BoundReport& report) {
  std::ostringstream os;
  os << "trial,seed,eps1,eps2,dist,bound,valid,violated\n";
  for (const auto& t : report.trials)
    os << t.trial << ',' << t.seed << ',' << format_double(t.eps1) << ',' << format_double(t.eps2) << ','
       << format_double(t.dist) << ',' << format_double(t.bound) << ',' << (t.valid ? 1 : 0) << ','
       << (t.violated ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace cmr
