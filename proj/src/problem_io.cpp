#include "cmr/problem_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cmr {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from(const json& j, Index rows, Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    fail(ErrorKind::ShapeMismatch, what + ": expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      fail(ErrorKind::ShapeMismatch, what + ": expected " + std::to_string(cols) + " columns");
    for (Index c = 0; c < cols; ++c) {
      const auto& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) fail(ErrorKind::Config, what + ": entries must be numbers");
      m(r, c) = x.get<double>();
    }
  }
  require_finite(m, what.c_str());
  return m;
}

Index dim_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 1)
    fail(ErrorKind::Config, std::string("problem: \"") + key + "\" must be a positive integer");
  return static_cast<Index>(j[key].get<long long>());
}

}  // namespace

Problem generate_problem(Index b, Index p, Index r, Index tasks, const CovarianceSpec& spec, std::uint64_t seed) {
  if (b < 1 || p < 1 || r < 1 || tasks < 1) fail(ErrorKind::InvalidArgument, "generate_problem: dims must be >= 1");
  if (r > b || r > p) fail(ErrorKind::RankRequest, "generate_problem: rank exceeds B or P");
  SeededRng rng(seed);
  Problem out;
  out.cov = spec.draw(b, p, tasks, rng);
  out.model = random_model(b, p, r, tasks, rng);
  out.seed = seed;
  return out;
}

std::string problem_to_json(const Problem& problem) {
  problem.model.validate();
  json j;
  j["format"] = "cmr-problem";
  j["version"] = 1;
  j["b"] = problem.model.bands();
  j["p"] = problem.model.positions();
  j["r"] = problem.model.rank();
  j["tasks"] = problem.model.tasks();
  if (problem.seed) j["seed"] = *problem.seed;
  j["trace_normalized"] = problem.cov.trace_normalized;
  j["w"] = matrix_json(problem.model.w);
  j["v"] = json::array();
  for (const auto& v : problem.model.v) j["v"].push_back(matrix_json(v));
  j["gamma"] = matrix_json(problem.cov.gamma.matrix());
  j["deltas"] = json::array();
  for (const auto& d : problem.cov.deltas) j["deltas"].push_back(matrix_json(d.matrix()));
  return j.dump(1) + "\n";
}

Problem problem_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, std::string("problem: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "cmr-problem")
    fail(ErrorKind::Config, "problem: \"format\" must be \"cmr-problem\"");
  if (!j.contains("version") || j["version"] != 1) fail(ErrorKind::Config, "problem: unsupported version");
  const Index b = dim_field(j, "b"), p = dim_field(j, "p"), r = dim_field(j, "r"), tasks = dim_field(j, "tasks");
  for (const char* key : {"v", "deltas"})
    if (!j.contains(key) || !j[key].is_array() || static_cast<Index>(j[key].size()) != tasks)
      fail(ErrorKind::ShapeMismatch, std::string("problem: \"") + key + "\" must hold one matrix per task");
  if (!j.contains("w") || !j.contains("gamma")) fail(ErrorKind::Config, "problem: missing \"w\" or \"gamma\"");

  Problem out;
  out.model.w = matrix_from(j["w"], b, r, "w");
  std::vector<SymMatrix> deltas;
  for (Index i = 0; i < tasks; ++i) {
    out.model.v.push_back(matrix_from(j["v"][static_cast<std::size_t>(i)], p, r, "v"));
    deltas.emplace_back(matrix_from(j["deltas"][static_cast<std::size_t>(i)], p, p, "deltas"));
  }
  out.model.validate();
  const bool normalized = j.value("trace_normalized", true);
  out.cov = TaskCovariances::make(SymMatrix(matrix_from(j["gamma"], b, b, "gamma")), std::move(deltas), normalized);
  if (j.contains("seed") && j["seed"].is_number_unsigned()) out.seed = j["seed"].get<std::uint64_t>();
  return out;
}

Problem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return problem_from_json(ss.str());
}

void save_problem(const Problem& problem, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << problem_to_json(problem);
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace cmr
