#pragma once

// Named experiment runs behind one interface: a config is resolved (defaults
// materialized, unknown keys rejected) at construction, run() computes, and
// the results come back as in-memory files plus a one-line summary.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace cmr {

class Harness {
 public:
  virtual ~Harness() = default;

  const std::string& name() const { return name_; }
  const nlohmann::json& resolved_config() const { return resolved_; }

  virtual void run(unsigned threads) = 0;

  // File name -> contents; empty until run() returns.
  const std::map<std::string, std::string>& files() const { return files_; }
  const std::string& summary() const { return summary_; }

 protected:
  explicit Harness(std::string name) : name_(std::move(name)) {}

  std::string name_;
  nlohmann::json resolved_;
  std::map<std::string, std::string> files_;
  std::string summary_;
};

// Throws Error(Config) for an unknown harness, unknown keys or bad values.
std::unique_ptr<Harness> make_harness(const std::string& name, const nlohmann::json& config);

const std::vector<std::string>& harness_names();

}  // namespace cmr
