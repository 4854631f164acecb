#include <doctest.h>

#include <cmath>

#include "cmr/experiments.hpp"
#include "cmr/problem_io.hpp"

#include <json.hpp>

using namespace cmr;

TEST_CASE("seeds and success rule") {
  CHECK(trial_seed(1, 2, 3, 4) == trial_seed(1, 2, 3, 4));
  CHECK(trial_seed(1, 2, 3, 4) != trial_seed(1, 3, 2, 4));
  CHECK(trial_seed(1, 2, 3, 4) != trial_seed(2, 2, 3, 4));
  CHECK(recovery_success(1, 0.1, 0.95, 0.9));
  CHECK_FALSE(recovery_success(1, 0.1, 0.90, 0.9));
  CHECK(recovery_success(2, 0.30, 0.0, 0.9));
  CHECK_FALSE(recovery_success(2, 0.32, 1.0, 0.9));
  CHECK(halving_ratio_ok(2.0));
  CHECK(halving_ratio_ok(1.34));
  CHECK_FALSE(halving_ratio_ok(1.3));
  CHECK_FALSE(halving_ratio_ok(3.1));
}

TEST_CASE("init modes and formatting") {
  CHECK(parse_init_mode("random") == InitMode::Random);
  CHECK(init_mode_name(InitMode::Spectral) == "spectral");
  CHECK_THROWS_AS(parse_init_mode("warm"), Error);
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("monotonicity counter") {
  Matrix r(2, 3);
  r << 0, 0.5, 1, 0.2, 0.4, 1;
  const auto m = count_monotonicity_violations(r);
  CHECK(m.pairs == 7);
  CHECK(m.violations == 1);
}

TEST_CASE("phase diagram") {
  PhaseGridConfig cfg;
  cfg.i_values = {10, 200};
  cfg.t_values = {2, 20};
  cfg.trials_per_cell = 4;
  SUBCASE("rates are the per-cell means and records are sorted") {
    const auto res = run_phase_diagram(cfg, 2);
    CHECK(res.trials.size() == 16);
    for (Index r = 0; r < 2; ++r)
      for (Index c = 0; c < 2; ++c) {
        double s = 0;
        for (int k = 0; k < 4; ++k) {
          const auto& t = res.trials[static_cast<std::size_t>((r * 2 + c) * 4 + k)];
          CHECK(t.cell_i == cfg.i_values[static_cast<std::size_t>(r)]);
          CHECK(t.cell_t == cfg.t_values[static_cast<std::size_t>(c)]);
          CHECK(t.trial == k);
          CHECK(t.seed == trial_seed(cfg.master_seed, r, c, k));
          s += t.success;
        }
        CHECK(res.success_rate(r, c) == s / 4);
      }
    CHECK(res.success_rate(1, 1) == 1.0);
  }
  SUBCASE("thread count does not change any output") {
    const auto a = run_phase_diagram(cfg, 1);
    const auto b = run_phase_diagram(cfg, 4);
    CHECK(phase_trials_csv(a) == phase_trials_csv(b));
    CHECK(phase_summary_csv(a) == phase_summary_csv(b));
    CHECK(phase_heatmap_pgm(a) == phase_heatmap_pgm(b));
  }
  SUBCASE("one scalar sample cannot identify W") {
    cfg.i_values = {1};
    cfg.t_values = {1};
    cfg.trials_per_cell = 5;
    const auto res = run_phase_diagram(cfg, 1);
    CHECK(res.success_rate(0, 0) == 0.0);
    for (const auto& t : res.trials) CHECK_FALSE(t.success);
  }
  SUBCASE("output formats") {
    const auto res = run_phase_diagram(cfg, 1);
    const auto csv = phase_trials_csv(res);
    CHECK(csv.rfind("cell_i,cell_t,trial,seed,dist,sq_corr,success,error_kind\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
    CHECK(phase_summary_csv(res).rfind("i,t,trials,successes,success_rate\n", 0) == 0);
    const auto pgm = phase_heatmap_pgm(res);
    CHECK(pgm.rfind("P5\n2 2\n255\n", 0) == 0);
    const auto px = pgm.substr(pgm.size() - 4);
    // First row is the largest I value.
    CHECK(static_cast<unsigned char>(px[0]) == std::lround(255 * res.success_rate(1, 0)));
    CHECK(static_cast<unsigned char>(px[3]) == std::lround(255 * res.success_rate(0, 1)));
  }
  SUBCASE("validation") {
    cfg.t_values = {0};
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}

TEST_CASE("B sweep") {
  BSweepConfig cfg;
  cfg.tasks = 100;
  cfg.samples = 5;
  cfg.trials_per_cell = 50;
  const auto res = run_b_sweep(cfg, 0);
  REQUIRE(res.success_rate.size() == 3);
  CHECK(res.success_rate[1] <= res.success_rate[0]);
  CHECK(res.success_rate[2] <= res.success_rate[1]);
  CHECK(b_sweep_trials_csv(res) == b_sweep_trials_csv(run_b_sweep(cfg, 3)));

  SUBCASE("single B value is one phase-diagram cell") {
    BSweepConfig one = cfg;
    one.b_values = {20};
    one.trials_per_cell = 5;
    PhaseGridConfig grid;
    grid.i_values = {one.tasks};
    grid.t_values = {one.samples};
    grid.trials_per_cell = 5;
    const auto a = run_b_sweep(one, 1);
    const auto b = run_phase_diagram(grid, 1);
    for (int k = 0; k < 5; ++k) {
      CHECK(a.trials[static_cast<std::size_t>(k)].dist == b.trials[static_cast<std::size_t>(k)].dist);
      CHECK(a.trials[static_cast<std::size_t>(k)].seed == b.trials[static_cast<std::size_t>(k)].seed);
    }
  }
}

TEST_CASE("lemma harnesses") {
  ConcentrationConfig cfg;
  SUBCASE("lemma 1") {
    const auto rep = verify_lemma1(cfg, 0);
    REQUIRE(rep.mean_relative_error.has_value());
    CHECK(*rep.mean_relative_error <= 0.05);
    CHECK(rep.rate_ok);
    CHECK(rep.halving_ratios.size() == 2);
    CHECK(concentration_csv(rep) == concentration_csv(verify_lemma1(cfg, 3)));
  }
  SUBCASE("lemma 2") {
    const auto rep = verify_lemma2(cfg, 0);
    CHECK(rep.rate_ok);
    CHECK_FALSE(rep.mean_relative_error.has_value());
    CHECK(rep.points.front().sample_count == 50 * 50 * 4);
  }
  SUBCASE("lemma 3") {
    BoundTrialConfig b;
    const auto rep = verify_lemma3(b, 0);
    CHECK(rep.trials.size() == 100);
    CHECK(rep.valid + rep.excluded == 100);
    CHECK(rep.violations == 0);
    CHECK(rep.valid == 100);
    for (const auto& t : rep.trials) CHECK(t.violated == (t.valid && t.dist > t.bound));
  }
  SUBCASE("lemma 3 excludes eps1 >= 1") {
    BoundTrialConfig b;
    b.tasks = 1;
    b.samples = 1;
    b.p = 1;
    b.trials = 20;
    b.covariance = {50.0, 1.0};
    const auto rep = verify_lemma3(b, 0);
    CHECK(rep.excluded > 0);
    CHECK(rep.valid + rep.excluded == 20);
    for (const auto& t : rep.trials) CHECK(t.valid == (t.eps1 < 1.0));
  }
}

TEST_CASE("problem documents") {
  const auto p = generate_problem(5, 3, 2, 4, {2.0, 3.0}, 99);
  const auto text = problem_to_json(p);
  const auto q = problem_from_json(text);
  CHECK(q.model.w == p.model.w);
  CHECK(q.model.v[3] == p.model.v[3]);
  CHECK(q.cov.gamma.matrix() == p.cov.gamma.matrix());
  CHECK(q.cov.deltas[2].matrix() == p.cov.deltas[2].matrix());
  CHECK(q.seed == std::optional<std::uint64_t>(99));
  CHECK(problem_to_json(q) == text);
  CHECK_THROWS_AS(problem_from_json("{\"format\": \"other\"}"), Error);
  CHECK_THROWS_AS(problem_from_json("not json"), Error);
  auto broken = nlohmann::json::parse(text);
  broken["w"].erase(0);
  CHECK_THROWS_AS(problem_from_json(broken.dump()), Error);
}
