#include "cmr/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <type_traits>

#include "cmr/error.hpp"
#include "cmr/experiments.hpp"
#include "cmr/problem_io.hpp"
#include "cmr/vision.hpp"

namespace cmr {

using nlohmann::json;

namespace {

// Reads keys of one JSON object onto defaults and records the resolved value
// of every field, so the echoed config is complete.
class Fields {
 public:
  Fields(const json& in, std::string where) : in_(in), where_(std::move(where)) {
    if (!in_.is_null() && !in_.is_object()) bad("", "must be a JSON object");
  }

  json& out() { return out_; }

  void field(const char* key, Index& value) { integer(key, value, 0); }
  void field(const char* key, int& value) {
    long long v = value;
    integer(key, v, std::numeric_limits<int>::min());
    value = static_cast<int>(v);
  }
  void field(const char* key, std::uint64_t& value) {
    if (const json* j = take(key)) {
      if (!j->is_number_unsigned() && !(j->is_number_integer() && j->get<long long>() >= 0))
        bad(key, "must be a non-negative integer");
      value = j->get<std::uint64_t>();
    }
    out_[key] = value;
  }
  void field(const char* key, double& value) {
    if (const json* j = take(key)) {
      if (!j->is_number()) bad(key, "must be a number");
      value = j->get<double>();
    }
    out_[key] = value;
  }
  void field(const char* key, bool& value) {
    if (const json* j = take(key)) {
      if (!j->is_boolean()) bad(key, "must be true or false");
      value = j->get<bool>();
    }
    out_[key] = value;
  }
  void field(const char* key, std::string& value) {
    if (const json* j = take(key)) {
      if (!j->is_string()) bad(key, "must be a string");
      value = j->get<std::string>();
    }
    out_[key] = value;
  }
  void field(const char* key, std::vector<Index>& value) {
    if (const json* j = take(key)) {
      if (!j->is_array() || j->empty()) bad(key, "must be a non-empty array of integers");
      value.clear();
      for (const auto& x : *j) {
        if (!x.is_number_integer()) bad(key, "must be a non-empty array of integers");
        value.push_back(static_cast<Index>(x.get<long long>()));
      }
    }
    out_[key] = value;
  }
  void field(const char* key, InitMode& value) {
    std::string s = init_mode_name(value);
    field(key, s);
    value = parse_config(key, [&] { return parse_init_mode(s); });
  }
  void field(const char* key, CovarianceSpec& value) {
    Fields sub(take_or_null(key), where_ + key + ".");
    sub.field("gamma_condition", value.gamma_condition);
    sub.field("delta_condition", value.delta_condition);
    out_[key] = sub.finish();
  }
  void field(const char* key, RefineConfig& value) {
    Fields sub(take_or_null(key), where_ + key + ".");
    sub.field("max_iters", value.max_iters);
    sub.field("step_size", value.step_size);
    sub.field("grad_tol", value.grad_tol);
    sub.field("ridge", value.ridge);
    sub.field("task_scaled_steps", value.task_scaled_steps);
    out_[key] = sub.finish();
  }
  void field(const char* key, std::vector<std::pair<int, int>>& value) {
    if (const json* j = take(key)) {
      if (!j->is_array()) bad(key, "must be an array of [a, b] digit pairs");
      value.clear();
      for (const auto& x : *j) {
        if (!x.is_array() || x.size() != 2 || !x[0].is_number_integer() || !x[1].is_number_integer())
          bad(key, "must be an array of [a, b] digit pairs");
        value.emplace_back(x[0].get<int>(), x[1].get<int>());
      }
    }
    json arr = json::array();
    for (const auto& [a, b] : value) arr.push_back({a, b});
    out_[key] = arr;
  }
  void field(const char* key, std::vector<vision::Method>& value) {
    if (const json* j = take(key)) {
      if (!j->is_array() || j->empty()) bad(key, "must be a non-empty array of method names");
      value.clear();
      for (const auto& x : *j) {
        if (!x.is_string()) bad(key, "must be a non-empty array of method names");
        const auto s = x.get<std::string>();
        value.push_back(parse_config(key, [&] { return vision::parse_method(s); }));
      }
    }
    json arr = json::array();
    for (auto m : value) arr.push_back(vision::method_name(m));
    out_[key] = arr;
  }

  // Rejects keys that no field consumed.
  json finish() {
    if (in_.is_object())
      for (const auto& [key, unused] : in_.items())
        if (!used_.count(key)) bad(key.c_str(), "is not a recognised option");
    return out_;
  }

 private:
  [[noreturn]] void bad(const char* key, const std::string& msg) const {
    fail(ErrorKind::Config, "config: \"" + where_ + key + "\" " + msg);
  }

  template <typename F>
  std::invoke_result_t<F> parse_config(const char* key, F&& f) const {
    try {
      return f();
    } catch (const Error& e) {
      bad(key, e.what());
    }
  }

  const json* take(const char* key) {
    used_.insert(key);
    if (!in_.is_object() || !in_.contains(key)) return nullptr;
    return &in_[key];
  }
  const json& take_or_null(const char* key) {
    static const json null_json;
    const json* j = take(key);
    return j ? *j : null_json;
  }

  template <typename T>
  void integer(const char* key, T& value, long long min) {
    if (const json* j = take(key)) {
      if (!j->is_number_integer() || j->get<long long>() < min) bad(key, "must be an integer");
      value = static_cast<T>(j->get<long long>());
    }
    out_[key] = value;
  }

  const json& in_;
  std::string where_;
  json out_ = json::object();
  std::set<std::string> used_;
};

// Config errors keep their kind; anything else thrown while validating is a
// config problem too.
template <typename Cfg>
void validate_config(const Cfg& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    fail(ErrorKind::Config, std::string("config: ") + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

json report_json(const ConcentrationReport& r) {
  json j;
  j["quantity"] = r.quantity;
  j["halving_ratios"] = r.halving_ratios;
  j["rate_ok"] = r.rate_ok;
  json points = json::array();
  for (const auto& p : r.points)
    points.push_back({{"tasks", p.tasks}, {"sample_count", p.sample_count}, {"median", p.median}});
  j["points"] = points;
  if (r.mean_relative_error) j["mean_relative_error"] = *r.mean_relative_error;
  return j;
}

class PhaseHarness final : public Harness {
 public:
  explicit PhaseHarness(const json& in) : Harness("phase") {
    Fields f(in, "");
    f.field("b", cfg_.b);
    f.field("p", cfg_.p);
    f.field("r", cfg_.r);
    f.field("i_values", cfg_.i_values);
    f.field("t_values", cfg_.t_values);
    f.field("trials_per_cell", cfg_.trials_per_cell);
    f.field("seed", cfg_.master_seed);
    f.field("init", cfg_.init_mode);
    f.field("success_threshold", cfg_.success_threshold);
    f.field("covariance", cfg_.covariance);
    f.field("refine", cfg_.refine);
    resolved_ = f.finish();
    validate_config(cfg_);
  }

  void run(unsigned threads) override {
    const auto res = run_phase_diagram(cfg_, threads);
    files_["trials.csv"] = phase_trials_csv(res);
    files_["summary.csv"] = phase_summary_csv(res);
    files_["heatmap.pgm"] = phase_heatmap_pgm(res);
    int failed = 0;
    for (const auto& t : res.trials) failed += t.error_kind.empty() ? 0 : 1;
    const auto mono = count_monotonicity_violations(res.success_rate);
    summary_ = "phase: init=" + init_mode_name(cfg_.init_mode) + " cells=" +
               std::to_string(res.success_rate.size()) + " trials=" + std::to_string(res.trials.size()) +
               " mean_success=" + fmt(res.success_rate.mean()) + " monotonicity_violations=" +
               std::to_string(mono.violations) + "/" + std::to_string(mono.pairs) +
               " failed_trials=" + std::to_string(failed);
  }

 private:
  PhaseGridConfig cfg_;
};

class SweepBHarness final : public Harness {
 public:
  explicit SweepBHarness(const json& in) : Harness("sweep-b") {
    Fields f(in, "");
    f.field("b_values", cfg_.b_values);
    f.field("p", cfg_.p);
    f.field("r", cfg_.r);
    f.field("tasks", cfg_.tasks);
    f.field("samples", cfg_.samples);
    f.field("trials_per_cell", cfg_.trials_per_cell);
    f.field("seed", cfg_.master_seed);
    f.field("init", cfg_.init_mode);
    f.field("success_threshold", cfg_.success_threshold);
    f.field("covariance", cfg_.covariance);
    f.field("refine", cfg_.refine);
    resolved_ = f.finish();
    validate_config(cfg_);
  }

  void run(unsigned threads) override {
    const auto res = run_b_sweep(cfg_, threads);
    files_["trials.csv"] = b_sweep_trials_csv(res);
    files_["summary.csv"] = b_sweep_summary_csv(res);
    summary_ = "sweep-b:";
    for (std::size_t k = 0; k < res.success_rate.size(); ++k)
      summary_ += " B=" + std::to_string(cfg_.b_values[k]) + ":" + fmt(res.success_rate[k]);
  }

 private:
  BSweepConfig cfg_;
};

void concentration_fields(Fields& f, ConcentrationConfig& cfg) {
  f.field("b", cfg.b);
  f.field("p", cfg.p);
  f.field("r", cfg.r);
  f.field("samples", cfg.samples);
  f.field("task_sweep", cfg.task_sweep);
  f.field("repetitions", cfg.repetitions);
  f.field("mean_check_tasks", cfg.mean_check_tasks);
  f.field("mean_check_datasets", cfg.mean_check_datasets);
  f.field("covariance", cfg.covariance);
  f.field("seed", cfg.master_seed);
}

class LemmaHarness final : public Harness {
 public:
  LemmaHarness(const json& in, int lemma) : Harness(lemma == 1 ? "verify-lemma1" : "verify-lemma2"), lemma_(lemma) {
    Fields f(in, "");
    concentration_fields(f, cfg_);
    resolved_ = f.finish();
    validate_config(cfg_);
  }

  void run(unsigned threads) override {
    const auto rep = lemma_ == 1 ? verify_lemma1(cfg_, threads) : verify_lemma2(cfg_, threads);
    files_["concentration.csv"] = concentration_csv(rep);
    files_["report.json"] = report_json(rep).dump(1) + "\n";
    summary_ = name_ + ":";
    if (rep.mean_relative_error) summary_ += " mean_relative_error=" + fmt(*rep.mean_relative_error);
    summary_ += " halving_ratios=";
    for (std::size_t k = 0; k < rep.halving_ratios.size(); ++k)
      summary_ += (k ? "," : "") + fmt(rep.halving_ratios[k]);
    summary_ += std::string(" rate_ok=") + (rep.rate_ok ? "true" : "false");
  }

 private:
  ConcentrationConfig cfg_;
  int lemma_;
};

class Lemma3Harness final : public Harness {
 public:
  explicit Lemma3Harness(const json& in) : Harness("verify-lemma3") {
    Fields f(in, "");
    f.field("b", cfg_.b);
    f.field("p", cfg_.p);
    f.field("r", cfg_.r);
    f.field("tasks", cfg_.tasks);
    f.field("samples", cfg_.samples);
    f.field("trials", cfg_.trials);
    f.field("covariance", cfg_.covariance);
    f.field("seed", cfg_.master_seed);
    resolved_ = f.finish();
    validate_config(cfg_);
  }

  void run(unsigned threads) override {
    const auto rep = verify_lemma3(cfg_, threads);
    files_["trials.csv"] = bound_trials_csv(rep);
    json j{{"trials", rep.trials.size()}, {"valid", rep.valid}, {"excluded", rep.excluded},
           {"violations", rep.violations}};
    files_["report.json"] = j.dump(1) + "\n";
    summary_ = "verify-lemma3: trials=" + std::to_string(rep.trials.size()) + " valid=" + std::to_string(rep.valid) +
               " excluded=" + std::to_string(rep.excluded) + " violations=" + std::to_string(rep.violations);
  }

 private:
  BoundTrialConfig cfg_;
};

class GradcheckHarness final : public Harness {
 public:
  explicit GradcheckHarness(const json& in) : Harness("gradcheck") {
    Fields f(in, "");
    f.field("b", cfg_.b);
    f.field("p", cfg_.p);
    f.field("r", cfg_.r);
    f.field("tasks", cfg_.tasks);
    f.field("samples", cfg_.samples);
    f.field("instances", cfg_.instances);
    f.field("step", cfg_.step);
    f.field("ridge", cfg_.ridge);
    f.field("seed", cfg_.master_seed);
    resolved_ = f.finish();
    if (cfg_.b < 1 || cfg_.p < 1 || cfg_.r < 1 || cfg_.tasks < 1 || cfg_.samples < 1 || cfg_.instances < 1)
      fail(ErrorKind::Config, "config: dimensions and instances must be >= 1");
    if (!(cfg_.step > 0) || !(cfg_.ridge >= 0)) fail(ErrorKind::Config, "config: step must be > 0, ridge >= 0");
  }

  void run(unsigned) override {
    const auto rep = gradcheck(cfg_);
    std::ostringstream os;
    os << "instance,max_relative_error\n";
    for (std::size_t k = 0; k < rep.max_relative_error.size(); ++k)
      os << k << ',' << format_double(rep.max_relative_error[k]) << '\n';
    files_["gradcheck.csv"] = os.str();
    summary_ = "gradcheck: instances=" + std::to_string(rep.max_relative_error.size()) +
               " worst_relative_error=" + fmt(rep.worst);
  }

 private:
  GradcheckConfig cfg_;
};

class ClassifyHarness final : public Harness {
 public:
  explicit ClassifyHarness(const json& in) : Harness("classify") {
    Fields f(in, "");
    if (data_dir_.empty()) {
      const char* env = std::getenv("CMR_DATA_DIR");
      data_dir_ = env && *env ? env : "data/mnist";
    }
    f.field("data_dir", data_dir_);
    f.field("images", images_);
    f.field("labels", labels_);
    f.field("pairs", cfg_.pairs);
    f.field("pair_count", cfg_.pair_count);
    f.field("t_train", cfg_.t_train);
    f.field("test_per_class", cfg_.test_per_class);
    f.field("repetitions", cfg_.repetitions);
    f.field("block", cfg_.block);
    f.field("uplift_bands", cfg_.uplift_bands);
    f.field("rank", cfg_.rank);
    f.field("ridge_cmr", cfg_.ridge_cmr);
    f.field("ridge_cmr1", cfg_.ridge_cmr1);
    f.field("ridge_frr", cfg_.ridge_frr);
    f.field("gamma_shrinkage", cfg_.gamma_shrinkage);
    f.field("refine_iters", cfg_.refine_iters);
    f.field("methods", cfg_.methods);
    f.field("uplift_seed", cfg_.uplift_seed);
    f.field("seed", cfg_.split_seed);
    resolved_ = f.finish();
    validate_config(cfg_);
  }

  void run(unsigned) override {
    const std::filesystem::path dir(data_dir_);
    const auto images = vision::read_idx_images(dir / images_);
    const auto labels = vision::read_idx_labels(dir / labels_);
    const auto res = vision::run_pair_classification(images, labels, cfg_);
    files_["accuracy.csv"] = vision::accuracy_csv(res);
    files_["summary.csv"] = vision::accuracy_summary_csv(res);
    summary_ = "classify: pairs=" + std::to_string(res.pairs.size()) + " repetitions=" +
               std::to_string(cfg_.repetitions) + " t=" + std::to_string(cfg_.t_train);
    for (auto m : cfg_.methods) summary_ += " " + vision::method_name(m) + "=" + fmt(res.method_mean(m));
  }

 private:
  vision::ClassifyConfig cfg_;
  std::string data_dir_;
  std::string images_ = "digits-images-idx3-ubyte";
  std::string labels_ = "digits-labels-idx1-ubyte";
};

class DiagnosticsHarness final : public Harness {
 public:
  explicit DiagnosticsHarness(const json& in) : Harness("diagnostics") {
    Fields f(in, "");
    f.field("model", model_path_);
    f.field("b", b_);
    f.field("p", p_);
    f.field("r", r_);
    f.field("tasks", tasks_);
    f.field("covariance", cov_);
    f.field("seed", seed_);
    resolved_ = f.finish();
    if (b_ < 1 || p_ < 1 || r_ < 1 || tasks_ < 1) fail(ErrorKind::Config, "config: dimensions must be >= 1");
  }

  void run(unsigned) override {
    // Without a model file a problem is generated from the remaining fields.
    const Problem problem =
        model_path_.empty() ? generate_problem(b_, p_, r_, tasks_, cov_, seed_) : load_problem(model_path_);
    const auto d = divergence_coefficients(problem.model, problem.cov);
    json j{{"eta", d.eta},   {"alpha", d.alpha}, {"mu", d.mu},
           {"nu", d.nu},     {"psi", d.psi},     {"chi", d.chi},
           {"kappa_gamma", d.kappa_gamma},       {"d", d.d},
           {"m", d.m},       {"l", d.l},         {"lambda_min_signal", d.lambda_min_signal},
           {"l_per_task", d.l_per_task}};
    files_["diagnostics.json"] = j.dump(1) + "\n";
    if (model_path_.empty()) files_["problem.json"] = problem_to_json(problem);
    summary_ = "diagnostics: eta=" + fmt(d.eta) + " alpha=" + fmt(d.alpha) + " mu=" + fmt(d.mu) +
               " nu=" + fmt(d.nu) + " psi=" + fmt(d.psi) + " chi=" + fmt(d.chi) + " kappa=" + fmt(d.kappa_gamma);
  }

 private:
  std::string model_path_;
  Index b_ = 10, p_ = 5, r_ = 1, tasks_ = 20;
  CovarianceSpec cov_{2.0, 2.0};
  std::uint64_t seed_ = 1;
};

}  // namespace

const std::vector<std::string>& harness_names() {
  static const std::vector<std::string> names{"phase",          "sweep-b",   "verify-lemma1", "verify-lemma2",
                                              "verify-lemma3",  "gradcheck", "classify",      "diagnostics"};
  return names;
}

std::unique_ptr<Harness> make_harness(const std::string& name, const json& config) {
  if (name == "phase") return std::make_unique<PhaseHarness>(config);
  if (name == "sweep-b") return std::make_unique<SweepBHarness>(config);
  if (name == "verify-lemma1") return std::make_unique<LemmaHarness>(config, 1);
  if (name == "verify-lemma2") return std::make_unique<LemmaHarness>(config, 2);
  if (name == "verify-lemma3") return std::make_unique<Lemma3Harness>(config);
  if (name == "gradcheck") return std::make_unique<GradcheckHarness>(config);
  if (name == "classify") return std::make_unique<ClassifyHarness>(config);
  if (name == "diagnostics") return std::make_unique<DiagnosticsHarness>(config);
  fail(ErrorKind::Config, "unknown harness \"" + name + "\"");
}

}  // namespace cmr
