#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "cmr/rng.hpp"
#include "cmr/vision.hpp"

using namespace cmr;
using namespace cmr::vision;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Io;
}

fs::path write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const auto path = fs::temp_directory_path() / ("cmr_test_" + std::to_string(::getpid()) + "_" + name);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

// Two 4x4 images: the first counts 0..15, the second is 255 - that.
std::vector<std::uint8_t> image_fixture() {
  std::vector<std::uint8_t> b{0x00, 0x00, 0x08, 0x03};
  put_be32(b, 2);
  put_be32(b, 4);
  put_be32(b, 4);
  for (int k = 0; k < 16; ++k) b.push_back(static_cast<std::uint8_t>(k));
  for (int k = 0; k < 16; ++k) b.push_back(static_cast<std::uint8_t>(255 - k));
  return b;
}

// Synthetic two-class images: class c lights up a class-specific quadrant.
struct ToyDigits {
  ImageSet images;
  std::vector<std::uint8_t> labels;
};

ToyDigits toy_digits(int per_class, double signal, std::uint64_t seed) {
  SeededRng rng(seed);
  ToyDigits out;
  out.images.rows = out.images.cols = 8;
  for (int k = 0; k < 2 * per_class; ++k) {
    const int label = k % 2;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool lit = label == 0 ? (r < 4 && c < 4) : (r >= 4 && c >= 4);
        out.images.pixels.push_back(0.5 * rng.uniform() + (lit ? signal : 0.0));
      }
    out.labels.push_back(static_cast<std::uint8_t>(label));
  }
  out.images.count = 2 * per_class;
  return out;
}

}  // namespace

TEST_CASE("IDX images") {
  const auto path = write_bytes("images", image_fixture());
  const auto set = read_idx_images(path);
  CHECK(set.count == 2);
  CHECK(set.rows == 4);
  CHECK(set.cols == 4);
  const Matrix a = set.image(0);
  const Matrix b = set.image(1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      CHECK(a(r, c) == (r * 4 + c) / 255.0);
      CHECK(b(r, c) == (255 - (r * 4 + c)) / 255.0);
    }
  fs::remove(path);
}

TEST_CASE("IDX labels and errors") {
  std::vector<std::uint8_t> labels{0x00, 0x00, 0x08, 0x01};
  put_be32(labels, 3);
  labels.insert(labels.end(), {7, 0, 9});
  const auto lp = write_bytes("labels", labels);
  CHECK(read_idx_labels(lp) == std::vector<std::uint8_t>{7, 0, 9});
  CHECK(kind_of([&] { read_idx_images(lp); }) == ErrorKind::BadMagic);

  auto bad = image_fixture();
  bad[2] = 0x0D;  // float payload
  const auto bp = write_bytes("bad", bad);
  CHECK(kind_of([&] { read_idx_images(bp); }) == ErrorKind::BadMagic);
  bad = image_fixture();
  bad[0] = 0x01;
  write_bytes("bad", bad);
  CHECK(kind_of([&] { read_idx_images(bp); }) == ErrorKind::BadMagic);

  auto trunc = image_fixture();
  trunc.pop_back();
  const auto tp = write_bytes("trunc", trunc);
  CHECK(kind_of([&] { read_idx_images(tp); }) == ErrorKind::TruncatedFile);
  trunc.resize(10);
  write_bytes("trunc", trunc);
  CHECK(kind_of([&] { read_idx_images(tp); }) == ErrorKind::TruncatedFile);

  auto extra = image_fixture();
  extra.push_back(1);
  const auto ep = write_bytes("extra", extra);
  CHECK(kind_of([&] { read_idx_images(ep); }) == ErrorKind::DimensionMismatch);

  CHECK(kind_of([&] { read_idx_images("/nonexistent/file"); }) == ErrorKind::Io);
  for (const auto& p : {lp, bp, tp, ep}) fs::remove(p);
}

TEST_CASE("block_reshape") {
  SeededRng rng(1);
  SUBCASE("MNIST shape") {
    const auto r = block_reshape(rng.normal_matrix(28, 28), 4);
    CHECK(r.bands.rows() == 16);
    CHECK(r.bands.cols() == 49);
    CHECK(r.spatial_side() == 7);
  }
  SUBCASE("layout") {
    Matrix img(4, 4);
    for (int k = 0; k < 16; ++k) img(k / 4, k % 4) = k;
    const auto r = block_reshape(img, 2);
    // Tile (0, 1) holds pixels (0,2) (0,3) (1,2) (1,3).
    CHECK(r.bands(0, 1) == 2);
    CHECK(r.bands(1, 1) == 3);
    CHECK(r.bands(2, 1) == 6);
    CHECK(r.bands(3, 1) == 7);
    CHECK(r.bands(0, 2) == 8);
  }
  SUBCASE("block 1 is the identity layout") {
    const Matrix img = rng.normal_matrix(3, 5);
    const auto r = block_reshape(img, 1);
    CHECK(r.bands.rows() == 1);
    CHECK(r.bands.cols() == 15);
    for (Index k = 0; k < 15; ++k) CHECK(r.bands(0, k) == img(k / 5, k % 5));
  }
  SUBCASE("exact round trip") {
    for (Index block : {1, 2, 4, 7}) {
      const Matrix img = rng.normal_matrix(28, 28);
      CHECK(block_unreshape(block_reshape(img, block), block) == img);
    }
  }
  SUBCASE("indivisible") {
    CHECK(kind_of([&] { block_reshape(Matrix::Zero(28, 28), 5); }) == ErrorKind::NotDivisible);
  }
}

TEST_CASE("uplift") {
  const auto map = UpliftMap::random(100, 16, 3);
  CHECK(map.projection.rows() == 100);
  CHECK(map.projection.cols() == 16);
  SeededRng rng(2);
  const auto img = block_reshape(rng.normal_matrix(28, 28), 4);
  const auto up = uplift(img, map);
  CHECK(up.bands.rows() == 100);
  CHECK(up.bands.cols() == 49);
  CHECK(up.bands.minCoeff() >= 0.0);

  UpliftMap zero = map;
  zero.bias.setZero();
  BandedImage blank{Matrix::Zero(16, 49), 7, 7};
  CHECK(uplift(blank, zero).bands.isZero(0));

  UpliftMap shifted = map;
  shifted.bias.setConstant(1e10);
  const Matrix affine = (map.projection * img.bands).colwise() + shifted.bias;
  CHECK(uplift(img, shifted).bands == affine);

  BandedImage wrong{Matrix::Zero(9, 4), 2, 2};
  CHECK(kind_of([&] { uplift(wrong, map); }) == ErrorKind::ShapeMismatch);
  CHECK(UpliftMap::random(100, 16, 3).projection == map.projection);
}

TEST_CASE("pair tasks") {
  std::vector<std::uint8_t> labels;
  for (int k = 0; k < 300; ++k) labels.push_back(static_cast<std::uint8_t>(k % 3));
  const auto t = make_pair_task(labels, 2, 0, 20, 30, 5, 1);
  CHECK(t.train.size() == 20);
  CHECK(t.test.size() == 60);
  int pos = 0;
  for (std::size_t k = 0; k < t.train.size(); ++k) {
    const int digit = labels[static_cast<std::size_t>(t.train[k])];
    CHECK(t.train_labels[k] == (digit == 2 ? 1.0 : -1.0));
    pos += t.train_labels[k] > 0;
  }
  CHECK(pos == 10);
  for (auto i : t.test) CHECK(std::find(t.train.begin(), t.train.end(), i) == t.train.end());

  const auto swapped = make_pair_task(labels, 0, 2, 20, 30, 5, 1);
  CHECK(swapped.train == t.train);
  for (std::size_t k = 0; k < t.train.size(); ++k) CHECK(swapped.train_labels[k] == -t.train_labels[k]);
  CHECK(make_pair_task(labels, 2, 0, 20, 30, 5, 2).train != t.train);

  CHECK(kind_of([&] { make_pair_task(labels, 0, 1, 100, 60, 5, 0); }) == ErrorKind::InsufficientSamples);
  CHECK(kind_of([&] { make_pair_task(labels, 1, 1, 10, 10, 5, 0); }) == ErrorKind::InvalidArgument);

  ClassifyConfig cfg;
  const auto pairs = resolve_pairs(cfg);
  CHECK(pairs.size() == 10);
  CHECK(resolve_pairs(cfg) == pairs);
  for (const auto& [a, b] : pairs) CHECK(a < b);
  cfg.pair_count = 45;
  CHECK(resolve_pairs(cfg).size() == 45);
  cfg.pairs = {{3, 8}};
  CHECK(resolve_pairs(cfg).size() == 1);
}

TEST_CASE("classification on toy digits") {
  const auto toy = toy_digits(400, 0.5, 4);
  ClassifyConfig cfg;
  cfg.block = 2;
  cfg.uplift_bands = 12;
  cfg.rank = 2;
  cfg.t_train = 20;
  cfg.test_per_class = 150;
  const auto map = UpliftMap::random(cfg.uplift_bands, 4, cfg.uplift_seed);
  FeatureBank bank(toy.images, map, cfg.block);

  SUBCASE("separable classes are learned") {
    const std::vector<PairTask> tasks{make_pair_task(toy.labels, 0, 1, 20, 150, 1, 0)};
    for (auto m : {Method::Cmr, Method::Cmr1, Method::Frr})
      CHECK(evaluate_method(m, tasks, bank, cfg).front() >= 0.95);
  }
  SUBCASE("label symmetry") {
    const std::vector<PairTask> ab{make_pair_task(toy.labels, 0, 1, 20, 150, 3, 0)};
    const std::vector<PairTask> ba{make_pair_task(toy.labels, 1, 0, 20, 150, 3, 0)};
    for (auto m : {Method::Cmr, Method::Cmr1, Method::Frr})
      CHECK(evaluate_method(m, ab, bank, cfg) == evaluate_method(m, ba, bank, cfg));
  }
  SUBCASE("identical class distributions give chance accuracy") {
    const auto noise = toy_digits(600, 0.0, 5);
    FeatureBank nb(noise.images, map, cfg.block);
    cfg.test_per_class = 500;
    const std::vector<PairTask> tasks{make_pair_task(noise.labels, 0, 1, 20, 500, 2, 0)};
    const double se = 0.5 / std::sqrt(1000.0);
    for (auto m : {Method::Cmr, Method::Cmr1, Method::Frr})
      CHECK(std::abs(evaluate_method(m, tasks, nb, cfg).front() - 0.5) <= 3 * se);
  }
  SUBCASE("determinism and table layout") {
    cfg.pairs = {{0, 1}};
    cfg.repetitions = 2;
    const auto a = run_pair_classification(toy.images, toy.labels, cfg);
    const auto b = run_pair_classification(toy.images, toy.labels, cfg);
    CHECK(accuracy_csv(a) == accuracy_csv(b));
    CHECK(a.rows.size() == 6);
    CHECK(accuracy_summary_csv(a).rfind("method,t,repetition,mean_accuracy\n", 0) == 0);
    CHECK(accuracy_csv(a).rfind("method,t,repetition,digit_a,digit_b,accuracy\n", 0) == 0);
    CHECK(a.method_mean(Method::Cmr) >= 0.95);
  }
  SUBCASE("config validation") {
    cfg.t_train = 7;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::Config);
    CHECK(kind_of([&] { parse_method("svm"); }) == ErrorKind::Config);
  }
}
