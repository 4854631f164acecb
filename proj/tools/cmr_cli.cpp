// Command-line front end. Talks to the library only through the C API.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmr/cmr.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Override {
  std::string key;
  std::function<bool(json&)> apply;  // returns false when the flag was not given
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<Override> overrides;
};

template <typename T>
void flag(Command& cmd, const std::string& name, const std::string& key, const std::string& help) {
  auto value = std::make_shared<std::optional<T>>();
  cmd.app->add_option(name, *value, help);
  cmd.overrides.push_back({key, [value, key](json& j) {
                             if (!*value) return false;
                             j[key] = **value;
                             return true;
                           }});
}

// "a,b;c,d" -> [[a,b],[c,d]]
void pairs_flag(Command& cmd) {
  auto value = std::make_shared<std::optional<std::string>>();
  cmd.app->add_option("--pairs", *value, "Digit pairs, e.g. 3,8;4,9");
  cmd.overrides.push_back({"pairs", [value](json& j) {
                             if (!*value) return false;
                             json pairs = json::array();
                             std::stringstream ss(**value);
                             std::string item;
                             while (std::getline(ss, item, ';')) {
                               int a = 0, b = 0;
                               char comma = 0;
                               std::stringstream is(item);
                               if (!(is >> a >> comma >> b) || comma != ',')
                                 throw CLI::ValidationError("--pairs", "expected a,b;c,d");
                               pairs.push_back({a, b});
                             }
                             j["pairs"] = pairs;
                             return true;
                           }});
}

json parse_set_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path fresh_run_dir(const fs::path& out, const std::string& name) {
  const std::string base = name + "-" + timestamp();
  fs::path dir = out / base;
  for (int k = 2; fs::exists(dir); ++k) dir = out / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

int report(cmr_status status, int code) {
  std::cerr << "error: " << cmr_status_string(status) << ": " << cmr_last_error() << "\n";
  return code;
}

int run_command(const std::string& name, Command& cmd, const std::string& out_dir,
                const std::optional<std::uint64_t>& seed, const std::optional<unsigned>& threads) {
  json config = json::object();
  if (!cmd.config_path.empty()) {
    std::ifstream in(cmd.config_path);
    if (!in) {
      std::cerr << "error: cannot open config " << cmd.config_path << "\n";
      return kExitConfig;
    }
    try {
      config = json::parse(in);
    } catch (const json::parse_error& e) {
      std::cerr << "error: " << cmd.config_path << ": " << e.what() << "\n";
      return kExitConfig;
    }
    if (!config.is_object()) {
      std::cerr << "error: " << cmd.config_path << ": top level must be an object\n";
      return kExitConfig;
    }
  }
  for (auto& o : cmd.overrides) o.apply(config);
  if (seed) config["seed"] = *seed;
  for (const auto& s : cmd.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got \"" << s << "\"\n";
      return kExitConfig;
    }
    config[s.substr(0, eq)] = parse_set_value(s.substr(eq + 1));
  }

  cmr_run* run = nullptr;
  if (auto st = cmr_run_create(name.c_str(), config.dump().c_str(), &run); st != CMR_OK)
    return report(st, kExitConfig);
  std::unique_ptr<cmr_run, void (*)(cmr_run*)> guard(run, cmr_run_free);

  fs::path dir;
  try {
    dir = fresh_run_dir(out_dir, name);
    std::ofstream cfg(dir / "resolved_config.json");
    cfg << cmr_run_resolved_config(run);
    if (!cfg) throw fs::filesystem_error("write failed", dir / "resolved_config.json", std::error_code());
  } catch (const std::exception& e) {
    std::cerr << "error: output directory: " << e.what() << "\n";
    return kExitConfig;
  }

  if (auto st = cmr_run_execute(run, threads.value_or(0)); st != CMR_OK) return report(st, kExitRuntime);
  if (auto st = cmr_run_write(run, dir.string().c_str()); st != CMR_OK) return report(st, kExitRuntime);
  std::cout << cmr_run_summary(run) << " -> " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Common-mechanism regression experiments", "cmr"};
  app.require_subcommand(0, 1);
  std::string out_dir = "results";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  app.add_option("-o,--out", out_dir, "Output root; runs go to <out>/<subcommand>-<timestamp>/")->capture_default_str();
  app.add_option("--seed", seed, "Master seed");
  app.add_option("-j,--threads", threads, "Worker threads (default: all cores; never changes results)");
  app.set_version_flag("--version", std::string(cmr_version()));

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    Command& cmd = commands[name];
    cmd.app = app.add_subcommand(name, help);
    cmd.app->add_option("-c,--config", cmd.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd.app->add_option("--set", cmd.sets, "Override any config key: key=json-value");
    // Global options are accepted after the subcommand as well.
    cmd.app->fallthrough();
    return cmd;
  };

  {
    auto& c = add("phase", "Recovery phase diagram over tasks x samples");
    flag<int>(c, "--trials", "trials_per_cell", "Trials per grid cell");
    flag<std::string>(c, "--init", "init", "spectral or random");
    flag<std::vector<long>>(c, "--i-values", "i_values", "Task counts");
    flag<std::vector<long>>(c, "--t-values", "t_values", "Samples per task");
    flag<long>(c, "--b", "b", "Bands");
    flag<long>(c, "--p", "p", "Positions");
    flag<long>(c, "--r", "r", "Rank");
    flag<double>(c, "--threshold", "success_threshold", "Success threshold");
  }
  {
    auto& c = add("sweep-b", "Recovery rate as the band count grows");
    flag<int>(c, "--trials", "trials_per_cell", "Trials per B value");
    flag<std::string>(c, "--init", "init", "spectral or random");
    flag<std::vector<long>>(c, "--b-values", "b_values", "Band counts");
    flag<long>(c, "--tasks", "tasks", "Tasks");
    flag<long>(c, "--samples", "samples", "Samples per task");
  }
  for (const char* name : {"verify-lemma1", "verify-lemma2"}) {
    auto& c = add(name, std::string(name == std::string("verify-lemma1") ? "Concentration of A_hat"
                                                                          : "Concentration of Gamma_hat"));
    flag<int>(c, "--repetitions", "repetitions", "Seeds per sweep point");
    flag<std::vector<long>>(c, "--task-sweep", "task_sweep", "Task counts (each 4x the previous)");
    flag<int>(c, "--datasets", "mean_check_datasets", "Datasets in the mean check");
  }
  {
    auto& c = add("verify-lemma3", "Perturbation bound on dist(W_hat, W)");
    flag<int>(c, "--trials", "trials", "Random trials");
    flag<long>(c, "--tasks", "tasks", "Tasks");
    flag<long>(c, "--samples", "samples", "Samples per task");
  }
  {
    auto& c = add("gradcheck", "Finite-difference check of the refinement gradient");
    flag<int>(c, "--instances", "instances", "Random instances");
    flag<double>(c, "--step", "step", "Central-difference step");
  }
  {
    auto& c = add("classify", "Digit-pair classification: cmr, cmr1 and frr");
    flag<std::string>(c, "--data-dir", "data_dir", "Directory with the IDX files (default $CMR_DATA_DIR)");
    flag<int>(c, "--pair-count", "pair_count", "Number of random digit pairs");
    pairs_flag(c);
    flag<long>(c, "--t-train", "t_train", "Training samples per task");
    flag<int>(c, "--repetitions", "repetitions", "Train/test repetitions");
    flag<long>(c, "--rank", "rank", "Rank of the shared mechanism");
    flag<std::vector<std::string>>(c, "--methods", "methods", "Subset of cmr, cmr1, frr");
    auto full = std::make_shared<bool>(false);
    c.app->add_flag("--full", *full, "All 45 pairs and 10 repetitions");
    c.overrides.push_back({"full", [full](json& j) {
                             if (!*full) return false;
                             j["pair_count"] = 45;
                             j["repetitions"] = 10;
                             return true;
                           }});
  }
  {
    auto& c = add("diagnostics", "Task-divergence coefficients of a model");
    flag<std::string>(c, "--model", "model", "cmr-problem JSON file (omit to generate one)");
    flag<long>(c, "--b", "b", "Bands of the generated problem");
    flag<long>(c, "--p", "p", "Positions");
    flag<long>(c, "--r", "r", "Rank");
    flag<long>(c, "--tasks", "tasks", "Tasks");
  }

  if (argc <= 1) {
    std::cout << app.help();
    return kExitConfig;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  for (auto& [name, cmd] : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      return run_command(name, cmd, out_dir, seed, threads);
    } catch (const CLI::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  std::cout << app.help();
  return kExitConfig;
}
