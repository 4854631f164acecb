#pragma once

// "cmr-problem" JSON documents: a ground-truth model plus its covariances.
// Matrices are nested row-major arrays.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "cmr/experiments.hpp"
#include "cmr/model.hpp"

namespace cmr {

struct Problem {
  CmrModel model;
  TaskCovariances cov;
  std::optional<std::uint64_t> seed;  // set when generated
};

// Covariances first, then the model, all from one stream seeded by `seed`.
Problem generate_problem(Index b, Index p, Index r, Index tasks, const CovarianceSpec& spec, std::uint64_t seed);

std::string problem_to_json(const Problem& problem);
Problem problem_from_json(const std::string& text);

Problem load_problem(const std::filesystem::path& path);
void save_problem(const Problem& problem, const std::filesystem::path& path);

}  // namespace cmr
