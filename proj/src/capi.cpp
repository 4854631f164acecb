#include "cmr/cmr.h"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cmr/estimator.hpp"
#include "cmr/harness.hpp"
#include "cmr/parallel.hpp"
#include "cmr/problem_io.hpp"

struct cmr_problem {
  cmr::Problem problem;
};

struct cmr_dataset {
  cmr::TaskDataset data;
};

struct cmr_estimate {
  cmr::SpectralEstimate est;
};

struct cmr_run {
  std::unique_ptr<cmr::Harness> harness;
  std::string resolved;
  std::vector<std::string> names;
  std::vector<const std::string*> contents;
};

namespace {

thread_local std::string last_error;

static_assert(static_cast<int>(cmr::ErrorKind::Io) + 1 == CMR_ERR_IO, "status codes mirror ErrorKind");

cmr_status status_of(cmr::ErrorKind kind) {
  return static_cast<cmr_status>(static_cast<int>(kind) + 1);
}

cmr_status set_error(cmr_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
cmr_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return CMR_OK;
  } catch (const cmr::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(CMR_ERR_CONFIG, std::string("config: ") + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CMR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CMR_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(CMR_ERR_INTERNAL, "unknown failure");
  }
}

void require_arg(bool ok, const char* what) {
  if (!ok) cmr::fail(cmr::ErrorKind::InvalidArgument, what);
}

cmr::Index to_index(size_t n) { return static_cast<cmr::Index>(n); }

cmr::Matrix from_row_major(const double* data, size_t rows, size_t cols) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data, to_index(rows), to_index(cols));
}

void to_row_major(const cmr::Matrix& m, double* out, size_t len) {
  require_arg(out != nullptr, "output buffer is NULL");
  if (len < static_cast<size_t>(m.size()))
    cmr::fail(cmr::ErrorKind::ShapeMismatch, "output buffer too small: need " + std::to_string(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, m.rows(), m.cols()) = m;
}

}  // namespace

extern "C" {

const char* cmr_version(void) { return "1.0.0"; }

const char* cmr_status_string(cmr_status status) {
  switch (status) {
    case CMR_OK: return "ok";
    case CMR_ERR_INTERNAL: return "internal error";
    default: break;
  }
  const int k = static_cast<int>(status) - 1;
  if (k < 0 || k > static_cast<int>(cmr::ErrorKind::Io)) return "unknown status";
  static thread_local std::string name;
  name = cmr::error_kind_name(static_cast<cmr::ErrorKind>(k));
  return name.c_str();
}

const char* cmr_last_error(void) { return last_error.c_str(); }

cmr_status cmr_problem_generate(size_t b, size_t p, size_t r, size_t tasks, double gamma_condition,
                                double delta_condition, uint64_t seed, cmr_problem** out) {
  return guarded([&] {
    require_arg(out != nullptr, "out is NULL");
    if (!(gamma_condition >= 1.0) || !(delta_condition >= 1.0))
      cmr::fail(cmr::ErrorKind::InvalidArgument, "condition numbers must be >= 1");
    auto problem = cmr::generate_problem(to_index(b), to_index(p), to_index(r), to_index(tasks),
                                         {gamma_condition, delta_condition}, seed);
    *out = new cmr_problem{std::move(problem)};
  });
}

cmr_status cmr_problem_load(const char* path, cmr_problem** out) {
  return guarded([&] {
    require_arg(path != nullptr && out != nullptr, "path or out is NULL");
    *out = new cmr_problem{cmr::load_problem(path)};
  });
}

cmr_status cmr_problem_save(const cmr_problem* problem, const char* path) {
  return guarded([&] {
    require_arg(problem != nullptr && path != nullptr, "problem or path is NULL");
    cmr::save_problem(problem->problem, path);
  });
}

cmr_status cmr_problem_dims(const cmr_problem* problem, size_t* b, size_t* p, size_t* r, size_t* tasks) {
  return guarded([&] {
    require_arg(problem != nullptr, "problem is NULL");
    const auto& m = problem->problem.model;
    if (b) *b = static_cast<size_t>(m.bands());
    if (p) *p = static_cast<size_t>(m.positions());
    if (r) *r = static_cast<size_t>(m.rank());
    if (tasks) *tasks = static_cast<size_t>(m.tasks());
  });
}

cmr_status cmr_problem_w(const cmr_problem* problem, double* out, size_t len) {
  return guarded([&] {
    require_arg(problem != nullptr, "problem is NULL");
    to_row_major(problem->problem.model.w, out, len);
  });
}

cmr_status cmr_problem_diagnostics(const cmr_problem* problem, cmr_diagnostics* out) {
  return guarded([&] {
    require_arg(problem != nullptr && out != nullptr, "problem or out is NULL");
    const auto d = cmr::divergence_coefficients(problem->problem.model, problem->problem.cov);
    *out = {d.eta, d.alpha, d.mu, d.nu, d.psi, d.chi, d.kappa_gamma, d.lambda_min_signal};
  });
}

void cmr_problem_free(cmr_problem* problem) { delete problem; }

cmr_status cmr_dataset_sample(const cmr_problem* problem, size_t samples, uint64_t seed, cmr_dataset** out) {
  return guarded([&] {
    require_arg(problem != nullptr && out != nullptr, "problem or out is NULL");
    require_arg(samples > 0, "samples must be > 0");
    cmr::SeededRng rng(seed);
    *out = new cmr_dataset{cmr::sample_dataset(problem->problem.model, problem->problem.cov, to_index(samples), rng)};
  });
}

cmr_status cmr_dataset_create(size_t tasks, size_t samples, size_t b, size_t p, const double* x, const double* y,
                              cmr_dataset** out) {
  return guarded([&] {
    require_arg(x != nullptr && y != nullptr && out != nullptr, "x, y or out is NULL");
    require_arg(tasks > 0 && samples > 0 && b > 0 && p > 0, "dimensions must be > 0");
    cmr::TaskDataset data(to_index(tasks), to_index(samples), to_index(b), to_index(p));
    for (size_t i = 0; i < tasks; ++i)
      for (size_t t = 0; t < samples; ++t)
        data.x(to_index(i), to_index(t)) = from_row_major(x + (i * samples + t) * b * p, b, p);
    data.set_responses(std::vector<double>(y, y + tasks * samples));
    data.validate();
    *out = new cmr_dataset{std::move(data)};
  });
}

cmr_status cmr_dataset_dims(const cmr_dataset* data, size_t* tasks, size_t* samples, size_t* b, size_t* p) {
  return guarded([&] {
    require_arg(data != nullptr, "dataset is NULL");
    if (tasks) *tasks = static_cast<size_t>(data->data.tasks());
    if (samples) *samples = static_cast<size_t>(data->data.samples());
    if (b) *b = static_cast<size_t>(data->data.bands());
    if (p) *p = static_cast<size_t>(data->data.positions());
  });
}

void cmr_dataset_free(cmr_dataset* data) { delete data; }

cmr_status cmr_spectral_fit(const cmr_dataset* data, size_t r, int whiten, cmr_estimate** out) {
  return guarded([&] {
    require_arg(data != nullptr && out != nullptr, "dataset or out is NULL");
    auto est = whiten ? cmr::spectral_cmr(data->data, to_index(r)) : cmr::spectral_cmr_nw(data->data, to_index(r));
    *out = new cmr_estimate{std::move(est)};
  });
}

cmr_status cmr_estimate_dims(const cmr_estimate* est, size_t* b, size_t* r) {
  return guarded([&] {
    require_arg(est != nullptr, "estimate is NULL");
    if (b) *b = static_cast<size_t>(est->est.w_hat.rows());
    if (r) *r = static_cast<size_t>(est->est.w_hat.cols());
  });
}

cmr_status cmr_estimate_w(const cmr_estimate* est, double* out, size_t len) {
  return guarded([&] {
    require_arg(est != nullptr, "estimate is NULL");
    to_row_major(est->est.w_hat, out, len);
  });
}

cmr_status cmr_estimate_eigenvalues(const cmr_estimate* est, double* out, size_t len) {
  return guarded([&] {
    require_arg(est != nullptr, "estimate is NULL");
    to_row_major(est->est.b_eigenvalues, out, len);
  });
}

void cmr_estimate_free(cmr_estimate* est) { delete est; }

cmr_status cmr_subspace_distance(const double* u, size_t rows, size_t u_cols, const double* v, size_t v_cols,
                                 double* out) {
  return guarded([&] {
    require_arg(u != nullptr && v != nullptr && out != nullptr, "u, v or out is NULL");
    require_arg(rows > 0 && u_cols > 0 && v_cols > 0, "dimensions must be > 0");
    *out = cmr::subspace_distance(from_row_major(u, rows, u_cols), from_row_major(v, rows, v_cols));
  });
}

size_t cmr_harness_count(void) { return cmr::harness_names().size(); }

const char* cmr_harness_name(size_t index) {
  const auto& names = cmr::harness_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

cmr_status cmr_run_create(const char* harness, const char* config_json, cmr_run** out) {
  return guarded([&] {
    require_arg(harness != nullptr && out != nullptr, "harness or out is NULL");
    nlohmann::json config = nlohmann::json::object();
    if (config_json && *config_json) config = nlohmann::json::parse(config_json);
    auto run = std::make_unique<cmr_run>();
    run->harness = cmr::make_harness(harness, config);
    run->resolved = run->harness->resolved_config().dump(2) + "\n";
    *out = run.release();
  });
}

const char* cmr_run_resolved_config(const cmr_run* run) { return run ? run->resolved.c_str() : nullptr; }

cmr_status cmr_run_execute(cmr_run* run, unsigned threads) {
  return guarded([&] {
    require_arg(run != nullptr, "run is NULL");
    run->harness->run(threads == 0 ? cmr::default_thread_count() : threads);
    run->names.clear();
    run->contents.clear();
    for (const auto& [name, data] : run->harness->files()) {
      run->names.push_back(name);
      run->contents.push_back(&data);
    }
  });
}

const char* cmr_run_summary(const cmr_run* run) { return run ? run->harness->summary().c_str() : nullptr; }

size_t cmr_run_file_count(const cmr_run* run) { return run ? run->names.size() : 0; }

const char* cmr_run_file_name(const cmr_run* run, size_t index) {
  return run && index < run->names.size() ? run->names[index].c_str() : nullptr;
}

const char* cmr_run_file_data(const cmr_run* run, size_t index, size_t* size) {
  if (!run || index >= run->contents.size()) return nullptr;
  if (size) *size = run->contents[index]->size();
  return run->contents[index]->data();
}

cmr_status cmr_run_write(const cmr_run* run, const char* directory) {
  return guarded([&] {
    require_arg(run != nullptr && directory != nullptr, "run or directory is NULL");
    const std::filesystem::path dir(directory);
    if (!std::filesystem::is_directory(dir)) cmr::fail(cmr::ErrorKind::Io, "not a directory: " + dir.string());
    for (size_t k = 0; k < run->names.size(); ++k) {
      std::ofstream f(dir / run->names[k], std::ios::binary);
      f.write(run->contents[k]->data(), static_cast<std::streamsize>(run->contents[k]->size()));
      if (!f) cmr::fail(cmr::ErrorKind::Io, "cannot write " + (dir / run->names[k]).string());
    }
  });
}

void cmr_run_free(cmr_run* run) { delete run; }

}  // extern "C"
