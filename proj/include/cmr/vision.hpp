#pragma once

// Image pipeline: IDX ingestion, block reshaping into bands x positions,
// a shared random ReLU uplift of the band axis, and the digit-pair
// classification study comparing CMR with per-task baselines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmr/estimator.hpp"
#include "cmr/linalg.hpp"

namespace cmr::vision {

// Raw IDX container: element type code, dimensions, payload bytes.
struct IdxArray {
  std::uint8_t type_code = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray read_idx_raw(const std::filesystem::path& path);

// count images of rows x cols, pixels scaled to [0, 1], row-major per image.
struct ImageSet {
  Index count = 0;
  Index rows = 0;
  Index cols = 0;
  std::vector<double> pixels;

  Matrix image(Index k) const;
};

ImageSet read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

struct BandedImage {
  Matrix bands;  // band count x positions
  Index tile_rows = 0;
  Index tile_cols = 0;

  Index spatial_side() const { return tile_rows == tile_cols ? tile_rows : 0; }
};

// Non-overlapping block x block tiles. Band k = (dr * block + dc) inside a
// tile; position = tile_row * tile_cols + tile_col.
BandedImage block_reshape(const Matrix& image, Index block);
Matrix block_unreshape(const BandedImage& img, Index block);

struct UpliftMap {
  Matrix projection;  // out x raw, N(0, 1 / raw)
  Vector bias;        // out, N(0, 1)
  std::uint64_t seed = 0;

  static UpliftMap random(Index out_bands, Index raw_bands, std::uint64_t seed);
};

// max(0, projection * bands + bias) at every position.
BandedImage uplift(const BandedImage& img, const UpliftMap& map);

struct PairTask {
  int digit_a = 0;
  int digit_b = 1;
  std::vector<Index> train;  // image indices
  std::vector<Index> test;
  std::vector<double> train_labels;  // +1 for digit_a, -1 for digit_b
  std::vector<double> test_labels;
};

enum class Method { Cmr, Cmr1, Frr };
std::string method_name(Method m);
Method parse_method(const std::string& name);

struct ClassifyConfig {
  std::vector<std::pair<int, int>> pairs;  // empty: choose `pair_count` pairs by seed
  int pair_count = 10;
  Index t_train = 50;
  Index test_per_class = 200;
  int repetitions = 5;
  Index block = 4;
  Index uplift_bands = 100;
  Index rank = 8;
  double ridge_cmr = 300.0;
  double ridge_cmr1 = 300.0;
  double ridge_frr = 100.0;
  int refine_iters = 0;
  // Added to Gamma_hat as a multiple of its mean eigenvalue; rectified bands
  // can be identically zero on a task.
  double gamma_shrinkage = 1e-3;
  std::vector<Method> methods{Method::Cmr, Method::Cmr1, Method::Frr};
  std::uint64_t uplift_seed = 2024;
  std::uint64_t split_seed = 1;

  void validate() const;
};

// Deterministic pair list: the configured pairs, or `pair_count` of the 45
// unordered digit pairs drawn without replacement using split_seed.
std::vector<std::pair<int, int>> resolve_pairs(const ClassifyConfig& cfg);

// Balanced split: t_train / 2 training and test_per_class test images per
// digit, drawn from a stream keyed by (split_seed, repetition, pair, digit) so the
// split does not depend on the order of the pair.
PairTask make_pair_task(const std::vector<std::uint8_t>& labels, int digit_a, int digit_b, Index t_train,
                        Index test_per_class, std::uint64_t split_seed, int repetition);

struct AccuracyRow {
  Method method = Method::Cmr;
  Index t_train = 0;
  int repetition = 0;
  std::vector<double> task_accuracy;  // one per pair
  double mean_accuracy = 0.0;
};

struct ClassificationResult {
  std::vector<std::pair<int, int>> pairs;
  std::vector<AccuracyRow> rows;

  double method_mean(Method m) const;
};

// Features of every image referenced by the tasks, keyed by image index.
class FeatureBank {
 public:
  FeatureBank(const ImageSet& images, const UpliftMap& map, Index block);

  const Matrix& features(Index image);  // uplift bands x positions
  Index bands() const { return map_.projection.rows(); }
  Index positions() const { return positions_; }

 private:
  const ImageSet& images_;
  UpliftMap map_;
  Index block_;
  Index positions_;
  std::vector<Matrix> cache_;
  std::vector<bool> ready_;
};

// Accuracy per task for one method and one set of tasks.
std::vector<double> evaluate_method(Method method, const std::vector<PairTask>& tasks, FeatureBank& bank,
                                    const ClassifyConfig& cfg);

ClassificationResult run_pair_classification(const ImageSet& images, const std::vector<std::uint8_t>& labels,
                                             const ClassifyConfig& cfg);

std::string accuracy_csv(const ClassificationResult& result);
std::string accuracy_summary_csv(const ClassificationResult& result);

}  // namespace cmr::vision
