#pragma once

// Monte-Carlo harnesses: recovery phase diagrams, the B sweep, and the
// moment-concentration / perturbation-bound checks. Every number produced
// here is a function of the config alone; thread count only changes speed.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmr/estimator.hpp"
#include "cmr/model.hpp"

namespace cmr {

enum class InitMode { Spectral, Random };

std::string init_mode_name(InitMode mode);
InitMode parse_init_mode(const std::string& name);

// Synthetic covariance setting: condition numbers of 1 mean identity.
struct CovarianceSpec {
  double gamma_condition = 1.0;
  double delta_condition = 1.0;

  TaskCovariances draw(Index b, Index p, Index tasks, SeededRng& rng) const;
};

struct PhaseGridConfig {
  Index b = 20;
  Index p = 10;
  Index r = 1;
  std::vector<Index> i_values{10, 50, 100, 500, 2000};
  std::vector<Index> t_values{2, 5, 10, 20, 50};
  int trials_per_cell = 50;
  std::uint64_t master_seed = 1;
  InitMode init_mode = InitMode::Spectral;
  double success_threshold = 0.90;
  CovarianceSpec covariance;
  RefineConfig refine{100, 1.0, 1e-6, 0.0, true};

  void validate() const;
};

struct TrialRecord {
  Index cell_b = 0;
  Index cell_i = 0;
  Index cell_t = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double dist = 0.0;
  double sq_corr = 0.0;
  bool success = false;
  std::string error_kind;  // empty when the trial ran to completion
};

struct PhaseDiagramResult {
  PhaseGridConfig config;
  Matrix success_rate;  // |i_values| x |t_values|
  std::vector<TrialRecord> trials;  // sorted by (row, column, trial)
};

// Seed of trial `trial` in grid cell (row, col).
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t row, std::uint64_t col, std::uint64_t trial);

// One synthetic recovery attempt. Estimator failures are caught and recorded.
TrialRecord run_recovery_trial(Index b, Index p, Index r, Index tasks, Index samples, const CovarianceSpec& cov,
                               std::uint64_t seed, InitMode mode, const RefineConfig& refine, double threshold);

// Success score: squared correlation for R = 1; for R > 1, 1 - dist^2.
bool recovery_success(Index r, double dist, double sq_corr, double threshold);

PhaseDiagramResult run_phase_diagram(const PhaseGridConfig& cfg, unsigned threads);

struct BSweepConfig {
  std::vector<Index> b_values{10, 20, 40};
  Index p = 10;
  Index r = 1;
  Index tasks = 100;
  Index samples = 10;
  int trials_per_cell = 50;
  std::uint64_t master_seed = 1;
  InitMode init_mode = InitMode::Spectral;
  double success_threshold = 0.90;
  CovarianceSpec covariance;
  RefineConfig refine{100, 1.0, 1e-6, 0.0, true};

  void validate() const;
};

struct BSweepResult {
  BSweepConfig config;
  std::vector<double> success_rate;  // one per b value
  std::vector<double> median_dist;   // spectral-stage-independent summary
  std::vector<TrialRecord> trials;
};

BSweepResult run_b_sweep(const BSweepConfig& cfg, unsigned threads);

// Counts adjacent pairs along I (fixed T) and along T (fixed I) where the
// success rate strictly decreases.
struct MonotonicityCount {
  int violations = 0;
  int pairs = 0;
};
MonotonicityCount count_monotonicity_violations(const Matrix& success_rate);

// Lemma-style moment checks share one problem setup.
struct ConcentrationConfig {
  Index b = 8;
  Index p = 4;
  Index r = 1;
  Index samples = 50;                      // T, fixed across the sweep
  std::vector<Index> task_sweep{50, 200, 800};  // I values; consecutive entries quadruple
  int repetitions = 20;
  Index mean_check_tasks = 50;
  int mean_check_datasets = 200;
  CovarianceSpec covariance{4.0, 4.0};
  std::uint64_t master_seed = 1;

  void validate() const;
};

struct SweepPoint {
  Index tasks = 0;
  Index sample_count = 0;  // IT for A_hat, ITP for Gamma_hat
  std::vector<double> errors;
  double median = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
};

struct ConcentrationReport {
  std::string quantity;  // "a_hat" or "gamma_hat"
  std::vector<SweepPoint> points;
  std::vector<double> halving_ratios;  // median(n) / median(4n)
  bool rate_ok = false;
  // Only for A_hat: || mean(A_hat) - A ||_2 / || A ||_2 over the mean-check datasets.
  std::optional<double> mean_relative_error;
};

// Ratio r passes when 2 / tolerance <= r <= 2 * tolerance.
bool halving_ratio_ok(double ratio, double tolerance = 1.5);

ConcentrationReport verify_lemma1(const ConcentrationConfig& cfg, unsigned threads);
ConcentrationReport verify_lemma2(const ConcentrationConfig& cfg, unsigned threads);

struct BoundTrialConfig {
  Index b = 10;
  Index p = 5;
  Index r = 1;
  Index tasks = 200;
  Index samples = 20;
  int trials = 100;
  CovarianceSpec covariance{2.0, 2.0};
  std::uint64_t master_seed = 7;

  void validate() const;
};

struct BoundTrial {
  int trial = 0;
  std::uint64_t seed = 0;
  double eps1 = 0.0;
  double eps2 = 0.0;
  double dist = 0.0;
  double bound = 0.0;
  bool valid = false;     // eps1 < 1
  bool violated = false;  // valid && dist > bound
};

struct BoundReport {
  BoundTrialConfig config;
  std::vector<BoundTrial> trials;
  int valid = 0;
  int excluded = 0;
  int violations = 0;
};

BoundReport verify_lemma3(const BoundTrialConfig& cfg, unsigned threads);

struct GradcheckConfig {
  Index b = 6;
  Index p = 4;
  Index r = 2;
  Index tasks = 3;
  Index samples = 5;
  int instances = 20;
  double step = 1e-5;
  double ridge = 0.1;
  std::uint64_t master_seed = 11;
};

struct GradcheckReport {
  std::vector<double> max_relative_error;  // per instance
  double worst = 0.0;
};

// Relative error |a - f| / max(|a|, |f|, 1e-4) per coordinate.
GradcheckReport gradcheck(const GradcheckConfig& cfg);

// %.17g formatting, "nan" / "inf" for non-finite values.
std::string format_double(double value);

std::string phase_trials_csv(const PhaseDiagramResult& result);
std::string phase_summary_csv(const PhaseDiagramResult& result);
// 8-bit binary PGM; rows are I values descending, columns T ascending.
std::string phase_heatmap_pgm(const PhaseDiagramResult& result);
std::string b_sweep_trials_csv(const BSweepResult& result);
std::string b_sweep_summary_csv(const BSweepResult& result);
std::string concentration_csv(const ConcentrationReport& report);
std::string bound_trials_csv(const BoundReport& report);

}  // namespace cmr
