#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "cmr/cmr.h"

TEST_CASE("status strings and errors") {
  CHECK(std::string(cmr_status_string(CMR_OK)) == "ok");
  CHECK(std::string(cmr_status_string(CMR_ERR_CONFIG)).size() > 0);
  CHECK(std::string(cmr_status_string(static_cast<cmr_status>(1234))) == "unknown status");
  CHECK(std::string(cmr_version()).size() > 0);
  cmr_problem* p = nullptr;
  CHECK(cmr_problem_generate(4, 3, 5, 2, 1.0, 1.0, 1, &p) == CMR_ERR_RANK_REQUEST);
  CHECK(p == nullptr);
  CHECK(std::strlen(cmr_last_error()) > 0);
  CHECK(cmr_problem_generate(4, 3, 1, 2, 0.5, 1.0, 1, &p) == CMR_ERR_INVALID_ARGUMENT);
  CHECK(cmr_problem_generate(4, 3, 1, 2, 1.0, 1.0, 1, nullptr) == CMR_ERR_INVALID_ARGUMENT);
  CHECK(cmr_problem_load("/nonexistent.json", &p) == CMR_ERR_IO);
  cmr_problem_free(nullptr);
  cmr_dataset_free(nullptr);
  cmr_estimate_free(nullptr);
  cmr_run_free(nullptr);
}

TEST_CASE("problem, dataset and spectral fit") {
  cmr_problem* p = nullptr;
  REQUIRE(cmr_problem_generate(10, 5, 1, 300, 1.0, 1.0, 3, &p) == CMR_OK);
  CHECK(std::strlen(cmr_last_error()) == 0);
  size_t b = 0, pp = 0, r = 0, tasks = 0;
  REQUIRE(cmr_problem_dims(p, &b, &pp, &r, &tasks) == CMR_OK);
  CHECK(b == 10);
  CHECK(pp == 5);
  CHECK(r == 1);
  CHECK(tasks == 300);

  std::vector<double> w(b * r);
  CHECK(cmr_problem_w(p, w.data(), 3) == CMR_ERR_SHAPE_MISMATCH);
  REQUIRE(cmr_problem_w(p, w.data(), w.size()) == CMR_OK);

  cmr_diagnostics diag{};
  REQUIRE(cmr_problem_diagnostics(p, &diag) == CMR_OK);
  CHECK(diag.kappa_gamma == doctest::Approx(1));
  CHECK(diag.psi == doctest::Approx(1));

  cmr_dataset* d = nullptr;
  REQUIRE(cmr_dataset_sample(p, 20, 9, &d) == CMR_OK);
  size_t ti = 0, ts = 0;
  REQUIRE(cmr_dataset_dims(d, &ti, &ts, nullptr, nullptr) == CMR_OK);
  CHECK(ti == 300);
  CHECK(ts == 20);

  for (int whiten : {1, 0}) {
    cmr_estimate* e = nullptr;
    REQUIRE(cmr_spectral_fit(d, 1, whiten, &e) == CMR_OK);
    size_t eb = 0, er = 0;
    REQUIRE(cmr_estimate_dims(e, &eb, &er) == CMR_OK);
    CHECK(eb == 10);
    CHECK(er == 1);
    std::vector<double> wh(10), ev(10);
    REQUIRE(cmr_estimate_w(e, wh.data(), wh.size()) == CMR_OK);
    REQUIRE(cmr_estimate_eigenvalues(e, ev.data(), ev.size()) == CMR_OK);
    CHECK(ev[0] >= ev[1]);
    double dist = 1;
    REQUIRE(cmr_subspace_distance(wh.data(), 10, 1, w.data(), 1, &dist) == CMR_OK);
    CHECK(dist < 0.3);
    cmr_estimate_free(e);
  }
  cmr_estimate* e = nullptr;
  CHECK(cmr_spectral_fit(d, 11, 1, &e) == CMR_ERR_RANK_REQUEST);

  const auto path = std::filesystem::temp_directory_path() / ("cmr_capi_" + std::to_string(::getpid()) + ".json");
  REQUIRE(cmr_problem_save(p, path.c_str()) == CMR_OK);
  cmr_problem* q = nullptr;
  REQUIRE(cmr_problem_load(path.c_str(), &q) == CMR_OK);
  std::vector<double> w2(b * r);
  REQUIRE(cmr_problem_w(q, w2.data(), w2.size()) == CMR_OK);
  CHECK(w2 == w);
  std::filesystem::remove(path);
  cmr_problem_free(q);
  cmr_dataset_free(d);
  cmr_problem_free(p);
}

TEST_CASE("user-supplied dataset") {
  // One task, two samples of 2 x 1 designs: y = x_0 (W = e1, V = 1).
  const double x[] = {1, 0, 0, 1};
  const double y[] = {1, 0};
  cmr_dataset* d = nullptr;
  REQUIRE(cmr_dataset_create(1, 2, 2, 1, x, y, &d) == CMR_OK);
  size_t b = 0, p = 0;
  REQUIRE(cmr_dataset_dims(d, nullptr, nullptr, &b, &p) == CMR_OK);
  CHECK(b == 2);
  CHECK(p == 1);
  cmr_estimate* e = nullptr;
  REQUIRE(cmr_spectral_fit(d, 1, 1, &e) == CMR_OK);
  double w[2];
  REQUIRE(cmr_estimate_w(e, w, 2) == CMR_OK);
  CHECK(std::abs(w[1]) <= 1e-12);
  cmr_estimate_free(e);
  cmr_dataset_free(d);
  const double bad_y[] = {1, NAN};
  CHECK(cmr_dataset_create(1, 2, 2, 1, x, bad_y, &d) == CMR_ERR_NON_FINITE);
}

TEST_CASE("subspace distance") {
  const double e1[] = {1, 0};
  const double e2[] = {0, 1};
  double d = 0;
  REQUIRE(cmr_subspace_distance(e1, 2, 1, e2, 1, &d) == CMR_OK);
  CHECK(d == doctest::Approx(1));
  const double zero[] = {0, 0};
  CHECK(cmr_subspace_distance(e1, 2, 1, zero, 1, &d) == CMR_ERR_RANK_DEFICIENT);
}

TEST_CASE("runs") {
  CHECK(cmr_harness_count() == 8);
  CHECK(std::string(cmr_harness_name(0)) == "phase");
  CHECK(cmr_harness_name(99) == nullptr);

  cmr_run* run = nullptr;
  CHECK(cmr_run_create("phase", "{\"bogus\": 1}", &run) == CMR_ERR_CONFIG);
  CHECK(cmr_run_create("phase", "{not json", &run) == CMR_ERR_CONFIG);
  CHECK(cmr_run_create("unknown", nullptr, &run) == CMR_ERR_CONFIG);

  REQUIRE(cmr_run_create("verify-lemma3", "{\"trials\": 10}", &run) == CMR_OK);
  CHECK(std::string(cmr_run_resolved_config(run)).find("\"trials\": 10") != std::string::npos);
  CHECK(cmr_run_file_count(run) == 0);
  REQUIRE(cmr_run_execute(run, 2) == CMR_OK);
  CHECK(std::string(cmr_run_summary(run)).find("violations=0") != std::string::npos);
  REQUIRE(cmr_run_file_count(run) == 2);
  CHECK(std::string(cmr_run_file_name(run, 1)) == "trials.csv");
  size_t size = 0;
  const char* data = cmr_run_file_data(run, 1, &size);
  REQUIRE(data != nullptr);
  CHECK(std::string(data, size).rfind("trial,seed,eps1,eps2,dist,bound,valid,violated\n", 0) == 0);
  CHECK(cmr_run_file_data(run, 5, &size) == nullptr);

  const auto dir = std::filesystem::temp_directory_path() / ("cmr_run_" + std::to_string(::getpid()));
  CHECK(cmr_run_write(run, dir.c_str()) == CMR_ERR_IO);
  std::filesystem::create_directories(dir);
  REQUIRE(cmr_run_write(run, dir.c_str()) == CMR_OK);
  CHECK(std::filesystem::file_size(dir / "trials.csv") == size);
  std::filesystem::remove_all(dir);
  cmr_run_free(run);

  REQUIRE(cmr_run_create("classify", "{\"data_dir\": \"/nonexistent\"}", &run) == CMR_OK);
  CHECK(cmr_run_execute(run, 1) == CMR_ERR_IO);
  cmr_run_free(run);
}
