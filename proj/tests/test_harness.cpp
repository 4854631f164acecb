#include <doctest.h>

#include "cmr/error.hpp"
#include "cmr/harness.hpp"

using namespace cmr;
using nlohmann::json;

namespace {

ErrorKind create_kind(const std::string& name, const json& cfg) {
  try {
    make_harness(name, cfg);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("every harness resolves its defaults") {
  for (const auto& name : harness_names()) {
    const auto h = make_harness(name, json::object());
    CHECK(h->name() == name);
    CHECK(h->resolved_config().is_object());
    CHECK(h->resolved_config().contains("seed"));
    // Feeding the resolved config back resolves to the same document.
    CHECK(make_harness(name, h->resolved_config())->resolved_config() == h->resolved_config());
    CHECK(h->files().empty());
  }
}

TEST_CASE("phase config") {
  const auto h = make_harness("phase", json{{"trials_per_cell", 3}, {"refine", {{"max_iters", 7}}}});
  const auto& c = h->resolved_config();
  CHECK(c["trials_per_cell"] == 3);
  CHECK(c["refine"]["max_iters"] == 7);
  CHECK(c["refine"]["grad_tol"] == 1e-6);
  CHECK(c["i_values"] == json({10, 50, 100, 500, 2000}));
  CHECK(c["t_values"] == json({2, 5, 10, 20, 50}));
  CHECK(c["success_threshold"] == 0.9);
  CHECK(c["init"] == "spectral");
  CHECK(c["b"] == 20);
  CHECK(c["p"] == 10);
  CHECK(c["r"] == 1);
}

TEST_CASE("config errors") {
  CHECK(create_kind("phase", json{{"trails_per_cell", 3}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"refine", {{"iters", 3}}}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"b", "twenty"}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"b", 2.5}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"init", "warm"}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"i_values", json::array()}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"success_threshold", 1.5}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json{{"seed", -1}}) == ErrorKind::Config);
  CHECK(create_kind("phase", json::array()) == ErrorKind::Config);
  CHECK(create_kind("classify", json{{"methods", {"svm"}}}) == ErrorKind::Config);
  CHECK(create_kind("classify", json{{"pairs", {{1, 1}}}}) == ErrorKind::Config);
  CHECK(create_kind("gradcheck", json{{"step", 0.0}}) == ErrorKind::Config);
  CHECK(create_kind("nope", json::object()) == ErrorKind::Config);
}

TEST_CASE("runs produce files and a summary") {
  const auto h = make_harness("gradcheck", json{{"instances", 3}});
  h->run(1);
  REQUIRE(h->files().count("gradcheck.csv") == 1);
  CHECK(h->files().at("gradcheck.csv").rfind("instance,max_relative_error\n", 0) == 0);
  CHECK(h->summary().rfind("gradcheck: instances=3", 0) == 0);

  const auto d = make_harness("diagnostics", json{{"tasks", 4}});
  d->run(1);
  CHECK(d->files().count("diagnostics.json") == 1);
  CHECK(d->files().count("problem.json") == 1);
  const auto diag = json::parse(d->files().at("diagnostics.json"));
  CHECK(diag["l_per_task"].size() == 4);
  CHECK(diag["kappa_gamma"].get<double>() >= 1.0);
}

TEST_CASE("harness outputs do not depend on the thread count") {
  const json cfg{{"i_values", {20, 100}}, {"t_values", {5, 10}}, {"trials_per_cell", 3}};
  const auto a = make_harness("phase", cfg);
  const auto b = make_harness("phase", cfg);
  a->run(1);
  b->run(3);
  CHECK(a->files() == b->files());
  CHECK(a->summary() == b->summary());
}
