#include "cmr/vision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cmr/experiments.hpp"
#include "cmr/rng.hpp"

namespace cmr::vision {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

IdxArray read_idx_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4) fail(ErrorKind::TruncatedFile, path.string() + ": missing IDX header");
  const std::uint32_t magic = read_be32(bytes, 0);
  // Only unsigned-byte payloads (type 0x08) with 1..3 dimensions are supported.
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xFF) != 0x08 || (magic & 0xFF) < 1 || (magic & 0xFF) > 3)
    fail(ErrorKind::BadMagic, path.string() + ": unsupported IDX magic");
  IdxArray out;
  out.type_code = 0x08;
  const std::size_t ndims = magic & 0xFF;
  if (bytes.size() < 4 + 4 * ndims) fail(ErrorKind::TruncatedFile, path.string() + ": truncated IDX header");
  std::size_t payload = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * d));
    payload *= out.dims.back();
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header + payload) fail(ErrorKind::TruncatedFile, path.string() + ": truncated IDX payload");
  if (bytes.size() > header + payload) fail(ErrorKind::DimensionMismatch, path.string() + ": trailing bytes");
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

Matrix ImageSet::image(Index k) const {
  if (k < 0 || k >= count) fail(ErrorKind::ShapeMismatch, "ImageSet::image: index out of range");
  Matrix m(rows, cols);
  const double* base = pixels.data() + k * rows * cols;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = base[r * cols + c];
  return m;
}

ImageSet read_idx_images(const std::filesystem::path& path) {
  const auto raw = read_idx_raw(path);
  if (raw.dims.size() != 3) fail(ErrorKind::BadMagic, path.string() + ": expected magic 0x00000803");
  ImageSet out;
  out.count = raw.dims[0];
  out.rows = raw.dims[1];
  out.cols = raw.dims[2];
  out.pixels.resize(raw.data.size());
  std::transform(raw.data.begin(), raw.data.end(), out.pixels.begin(),
                 [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
  return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  auto raw = read_idx_raw(path);
  if (raw.dims.size() != 1) fail(ErrorKind::BadMagic, path.string() + ": expected magic 0x00000801");
  return std::move(raw.data);
}

BandedImage block_reshape(const Matrix& image, Index block) {
  if (block < 1 || image.rows() % block != 0 || image.cols() % block != 0)
    fail(ErrorKind::NotDivisible, "block_reshape: block must divide both image sides");
  BandedImage out;
  out.tile_rows = image.rows() / block;
  out.tile_cols = image.cols() / block;
  out.bands.resize(block * block, out.tile_rows * out.tile_cols);
  for (Index tr = 0; tr < out.tile_rows; ++tr)
    for (Index tc = 0; tc < out.tile_cols; ++tc)
      for (Index dr = 0; dr < block; ++dr)
        for (Index dc = 0; dc < block; ++dc)
          out.bands(dr * block + dc, tr * out.tile_cols + tc) = image(tr * block + dr, tc * block + dc);
  return out;
}

Matrix block_unreshape(const BandedImage& img, Index block) {
  if (block < 1 || img.bands.rows() != block * block || img.bands.cols() != img.tile_rows * img.tile_cols)
    fail(ErrorKind::ShapeMismatch, "block_unreshape: band layout does not match block");
  Matrix image(img.tile_rows * block, img.tile_cols * block);
  for (Index tr = 0; tr < img.tile_rows; ++tr)
    for (Index tc = 0; tc < img.tile_cols; ++tc)
      for (Index dr = 0; dr < block; ++dr)
        for (Index dc = 0; dc < block; ++dc)
          image(tr * block + dr, tc * block + dc) = img.bands(dr * block + dc, tr * img.tile_cols + tc);
  return image;
}

UpliftMap UpliftMap::random(Index out_bands, Index raw_bands, std::uint64_t seed) {
  if (out_bands < 1 || raw_bands < 1) fail(ErrorKind::ShapeMismatch, "UpliftMap: band counts must be positive");
  SeededRng rng(seed);
  UpliftMap map;
  map.seed = seed;
  map.projection = rng.normal_matrix(out_bands, raw_bands) / std::sqrt(static_cast<double>(raw_bands));
  map.bias = rng.normal_matrix(out_bands, 1).col(0);
  return map;
}

BandedImage uplift(const BandedImage& img, const UpliftMap& map) {
  if (map.projection.cols() != img.bands.rows() || map.bias.size() != map.projection.rows())
    fail(ErrorKind::ShapeMismatch, "uplift: projection does not match the band count");
  BandedImage out;
  out.tile_rows = img.tile_rows;
  out.tile_cols = img.tile_cols;
  out.bands = ((map.projection * img.bands).colwise() + map.bias).cwiseMax(0.0);
  return out;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Cmr: return "cmr";
    case Method::Cmr1: return "cmr1";
    case Method::Frr: return "frr";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "cmr") return Method::Cmr;
  if (name == "cmr1") return Method::Cmr1;
  if (name == "frr") return Method::Frr;
  fail(ErrorKind::Config, "unknown method \"" + name + "\" (expected cmr, cmr1 or frr)");
}

void ClassifyConfig::validate() const {
  if (t_train < 2 || t_train % 2 != 0) fail(ErrorKind::Config, "t_train must be an even number >= 2");
  if (test_per_class < 1 || repetitions < 1) fail(ErrorKind::Config, "test_per_class and repetitions must be >= 1");
  if (pairs.empty() && (pair_count < 1 || pair_count > 45)) fail(ErrorKind::Config, "pair_count must be in 1..45");
  for (const auto& [a, b] : pairs)
    if (a == b || a < 0 || b < 0 || a > 9 || b > 9) fail(ErrorKind::Config, "pairs must hold two distinct digits");
  if (block < 1 || uplift_bands < 1 || rank < 1) fail(ErrorKind::Config, "block, uplift_bands and rank must be >= 1");
  if (!(ridge_cmr >= 0) || !(ridge_cmr1 >= 0) || !(ridge_frr >= 0)) fail(ErrorKind::Config, "ridge must be >= 0");
  if (!(gamma_shrinkage >= 0)) fail(ErrorKind::Config, "gamma_shrinkage must be >= 0");
  if (refine_iters < 0) fail(ErrorKind::Config, "refine_iters must be >= 0");
  if (methods.empty()) fail(ErrorKind::Config, "methods must be non-empty");
}

std::vector<std::pair<int, int>> resolve_pairs(const ClassifyConfig& cfg) {
  if (!cfg.pairs.empty()) return cfg.pairs;
  std::vector<std::pair<int, int>> all;
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b < 10; ++b) all.emplace_back(a, b);
  SeededRng rng(derive_seed(cfg.split_seed, {0xFA12}));
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.next_u64() % (all.size() - k));
    std::swap(all[k], all[j]);
  }
  all.resize(static_cast<std::size_t>(cfg.pair_count));
  std::sort(all.begin(), all.end());
  return all;
}

PairTask make_pair_task(const std::vector<std::uint8_t>& labels, int digit_a, int digit_b, Index t_train,
                        Index test_per_class, std::uint64_t split_seed, int repetition) {
  if (digit_a == digit_b) fail(ErrorKind::InvalidArgument, "make_pair_task: digits must differ");
  const int lo = std::min(digit_a, digit_b);
  const int hi = std::max(digit_a, digit_b);
  const Index per_class = t_train / 2;
  PairTask task;
  task.digit_a = digit_a;
  task.digit_b = digit_b;
  for (int digit : {lo, hi}) {
    std::vector<Index> pool;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == digit) pool.push_back(static_cast<Index>(k));
    if (static_cast<Index>(pool.size()) < per_class + test_per_class)
      fail(ErrorKind::InsufficientSamples, "make_pair_task: not enough images of digit " + std::to_string(digit));
    SeededRng rng(derive_seed(split_seed, {static_cast<std::uint64_t>(repetition), static_cast<std::uint64_t>(lo),
                                           static_cast<std::uint64_t>(hi), static_cast<std::uint64_t>(digit)}));
    const auto take = static_cast<std::size_t>(per_class + test_per_class);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.next_u64() % (pool.size() - k));
      std::swap(pool[k], pool[j]);
    }
    const double label = digit == digit_a ? 1.0 : -1.0;
    for (std::size_t k = 0; k < take; ++k) {
      auto& indices = k < static_cast<std::size_t>(per_class) ? task.train : task.test;
      auto& ys = k < static_cast<std::size_t>(per_class) ? task.train_labels : task.test_labels;
      indices.push_back(pool[k]);
      ys.push_back(label);
    }
  }
  return task;
}

FeatureBank::FeatureBank(const ImageSet& images, const UpliftMap& map, Index block)
    : images_(images), map_(map), block_(block) {
  if (images.rows % block != 0 || images.cols % block != 0)
    fail(ErrorKind::NotDivisible, "FeatureBank: block must divide the image sides");
  if (map.projection.cols() != block * block)
    fail(ErrorKind::ShapeMismatch, "FeatureBank: uplift input width must equal block^2");
  positions_ = (images.rows / block) * (images.cols / block);
  cache_.resize(static_cast<std::size_t>(images.count));
  ready_.assign(static_cast<std::size_t>(images.count), false);
}

const Matrix& FeatureBank::features(Index image) {
  const auto k = static_cast<std::size_t>(image);
  if (!ready_.at(k)) {
    cache_[k] = uplift(block_reshape(images_.image(image), block_), map_).bands;
    ready_[k] = true;
  }
  return cache_[k];
}

namespace {

double accuracy(const std::vector<double>& scores, const std::vector<double>& labels) {
  std::size_t correct = 0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (scores[k] * labels[k] > 0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

// Per-task centering stands in for an unpenalized intercept.
struct Centering {
  Matrix mean_x;
  double mean_y = 0.0;
};

Centering task_centering(const PairTask& task, FeatureBank& bank) {
  Centering c;
  c.mean_x = Matrix::Zero(bank.bands(), bank.positions());
  for (auto idx : task.train) c.mean_x += bank.features(idx);
  c.mean_x /= static_cast<double>(task.train.size());
  for (double y : task.train_labels) c.mean_y += y;
  c.mean_y /= static_cast<double>(task.train_labels.size());
  return c;
}

TaskDataset centered_dataset(const std::vector<PairTask>& tasks, const std::vector<Centering>& centers,
                             FeatureBank& bank) {
  const auto samples = static_cast<Index>(tasks.front().train.size());
  TaskDataset data(static_cast<Index>(tasks.size()), samples, bank.bands(), bank.positions());
  std::vector<double> y(static_cast<std::size_t>(data.tasks() * samples));
  for (Index i = 0; i < data.tasks(); ++i) {
    const auto& task = tasks[static_cast<std::size_t>(i)];
    const auto& c = centers[static_cast<std::size_t>(i)];
    for (Index t = 0; t < samples; ++t) {
      data.x(i, t) = bank.features(task.train[static_cast<std::size_t>(t)]) - c.mean_x;
      y[static_cast<std::size_t>(i * samples + t)] = task.train_labels[static_cast<std::size_t>(t)] - c.mean_y;
    }
  }
  data.set_responses(std::move(y));
  return data;
}

// Spectral W, closed-form V_i, optional joint refinement.
std::pair<Matrix, std::vector<Matrix>> fit_bilinear(const TaskDataset& data, Index rank, double ridge,
                                                    int refine_iters, double shrinkage) {
  Matrix gamma = estimate_gamma(data).matrix();
  gamma.diagonal().array() += shrinkage * gamma.trace() / static_cast<double>(gamma.rows());
  const auto est = spectral_from_moments(SymMatrix(gamma), estimate_a(data), rank);
  Matrix w = est.w_hat;
  std::vector<Matrix> v = fit_local_all(w, data, ridge);
  if (refine_iters > 0) {
    RefineConfig cfg;
    cfg.max_iters = refine_iters;
    cfg.grad_tol = 1e-8;
    // fit_local penalizes a sum over T samples; refine_gd uses the mean.
    cfg.ridge = ridge / static_cast<double>(data.samples());
    auto fit = refine_gd(w, v, data, cfg);
    w = std::move(fit.w);
    v = std::move(fit.v);
  }
  return {std::move(w), std::move(v)};
}

std::vector<double> bilinear_scores(const PairTask& task, const Centering& c, const Matrix& w, const Matrix& v,
                                    FeatureBank& bank) {
  std::vector<double> scores;
  scores.reserve(task.test.size());
  for (auto idx : task.test) {
    const Matrix x = bank.features(idx) - c.mean_x;
    scores.push_back(w.cwiseProduct(x * v).sum() + c.mean_y);
  }
  return scores;
}

}  // namespace

std::vector<double> evaluate_method(Method method, const std::vector<PairTask>& tasks, FeatureBank& bank,
                                    const ClassifyConfig& cfg) {
  if (tasks.empty()) fail(ErrorKind::InsufficientSamples, "evaluate_method: no tasks");
  std::vector<Centering> centers;
  for (const auto& task : tasks) centers.push_back(task_centering(task, bank));
  std::vector<double> acc;

  switch (method) {
    case Method::Cmr: {
      const auto data = centered_dataset(tasks, centers, bank);
      const auto [w, v] = fit_bilinear(data, cfg.rank, cfg.ridge_cmr, cfg.refine_iters, cfg.gamma_shrinkage);
      for (std::size_t i = 0; i < tasks.size(); ++i)
        acc.push_back(accuracy(bilinear_scores(tasks[i], centers[i], w, v[i], bank), tasks[i].test_labels));
      break;
    }
    case Method::Cmr1: {
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto data = centered_dataset({tasks[i]}, {centers[i]}, bank);
        const auto [w, v] = fit_bilinear(data, cfg.rank, cfg.ridge_cmr1, cfg.refine_iters, cfg.gamma_shrinkage);
        acc.push_back(accuracy(bilinear_scores(tasks[i], centers[i], w, v.front(), bank), tasks[i].test_labels));
      }
      break;
    }
    case Method::Frr: {
      const Index dim = bank.bands() * bank.positions();
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& task = tasks[i];
        Matrix features(static_cast<Index>(task.train.size()), dim);
        Vector targets(static_cast<Index>(task.train.size()));
        for (std::size_t t = 0; t < task.train.size(); ++t) {
          const Matrix x = bank.features(task.train[t]) - centers[i].mean_x;
          features.row(static_cast<Index>(t)) = Eigen::Map<const Vector>(x.data(), dim).transpose();
          targets(static_cast<Index>(t)) = task.train_labels[t] - centers[i].mean_y;
        }
        const Vector weights = frr_baseline({features}, {targets}, cfg.ridge_frr).front();
        std::vector<double> scores;
        for (auto idx : task.test) {
          const Matrix x = bank.features(idx) - centers[i].mean_x;
          scores.push_back(Eigen::Map<const Vector>(x.data(), dim).dot(weights) + centers[i].mean_y);
        }
        acc.push_back(accuracy(scores, task.test_labels));
      }
      break;
    }
  }
  return acc;
}

double ClassificationResult::method_mean(Method m) const {
  double sum = 0;
  int n = 0;
  for (const auto& row : rows)
    if (row.method == m) {
      sum += row.mean_accuracy;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

ClassificationResult run_pair_classification(const ImageSet& images, const std::vector<std::uint8_t>& labels,
                                             const ClassifyConfig& cfg) {
  cfg.validate();
  if (static_cast<Index>(labels.size()) != images.count)
    fail(ErrorKind::DimensionMismatch, "image and label counts differ");
  const auto map = UpliftMap::random(cfg.uplift_bands, cfg.block * cfg.block, cfg.uplift_seed);
  FeatureBank bank(images, map, cfg.block);
  ClassificationResult result;
  result.pairs = resolve_pairs(cfg);
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    std::vector<PairTask> tasks;
    for (const auto& [a, b] : result.pairs)
      tasks.push_back(make_pair_task(labels, a, b, cfg.t_train, cfg.test_per_class, cfg.split_seed, rep));
    for (auto method : cfg.methods) {
      AccuracyRow row;
      row.method = method;
      row.t_train = cfg.t_train;
      row.repetition = rep;
      row.task_accuracy = evaluate_method(method, tasks, bank, cfg);
      double sum = 0;
      for (double a : row.task_accuracy) sum += a;
      row.mean_accuracy = sum / static_cast<double>(row.task_accuracy.size());
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

std::string accuracy_csv(const ClassificationResult& result) {
  std::ostringstream os;
  os << "method,t,repetition,digit_a,digit_b,accuracy\n";
  for (const auto& row : result.rows)
    for (std::size_t k = 0; k < row.task_accuracy.size(); ++k)
      os << method_name(row.method) << ',' << row.t_train << ',' << row.repetition << ',' << result.pairs[k].first
         << ',' << result.pairs[k].second << ',' << format_double(row.task_accuracy[k]) << '\n';
  return os.str();
}

std::string accuracy_summary_csv(const ClassificationResult& result) {
  std::ostringstream os;
  os << "method,t,repetition,mean_accuracy\n";
  for (const auto& row : result.rows)
    os << method_name(row.method) << ',' << row.t_train << ',' << row.repetition << ','
       << format_double(row.mean_accuracy) << '\n';
  return os.str();
}

}  // namespace cmr::vision
