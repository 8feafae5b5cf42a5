#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "fsga/data.hpp"
#include "fsga/errors.hpp"

using namespace fsga;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fsga-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Tensor random_image(int s, uint64_t seed) {
  Rng rng(seed);
  Tensor t({3, s, s});
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = std::clamp(0.6f * rng.normal_f(), -1.0f, 1.0f);
  return t;
}

}  // namespace

TEST_CASE("load_image_dir: seeded subset is stable across runs") {
  TempDir dir("subset");
  for (int i = 0; i < 30; ++i)
    save_image(random_image(16, 100 + i), (dir.path / ("img" + std::to_string(i) + ".png")).string());
  const FewShotDataset a = load_image_dir(dir.path.string(), 16, 10, 0);
  const FewShotDataset b = load_image_dir(dir.path.string(), 16, 10, 0);
  REQUIRE(a.k() == 10);
  CHECK(a.provenance == b.provenance);
  for (int64_t i = 0; i < a.images.numel(); ++i) CHECK(a.images[i] == b.images[i]);
  const FewShotDataset c = load_image_dir(dir.path.string(), 16, 10, 1);
  CHECK(a.provenance != c.provenance);
}

TEST_CASE("load_image_dir: pure white maps to 1.0") {
  TempDir dir("white");
  Tensor white({3, 8, 8});
  white.fill(1.0f);
  save_image(white, (dir.path / "white.png").string());
  const FewShotDataset ds = load_image_dir(dir.path.string(), 8, 1, 0);
  for (int64_t i = 0; i < ds.images.numel(); ++i) CHECK(ds.images[i] == 1.0f);
}

TEST_CASE("load_image_dir: limit beyond availability loads what exists") {
  TempDir dir("short");
  for (int i = 0; i < 5; ++i)
    save_image(random_image(8, i), (dir.path / ("i" + std::to_string(i) + ".png")).string());
  const FewShotDataset ds = load_image_dir(dir.path.string(), 8, 10, 0);
  CHECK(ds.k() == 5);
}

TEST_CASE("load_image_dir: error paths") {
  TempDir dir("empty");
  CHECK_THROWS_AS(load_image_dir(dir.path.string(), 8, 1, 0), IoError);
  CHECK_THROWS_AS(load_image_dir((dir.path / "nope").string(), 8, 1, 0), IoError);

  // Undecodable file mixed with a good one: skipped with a warning.
  std::ofstream bad(dir.path / "broken.png");
  bad << "not a png";
  bad.close();
  save_image(random_image(8, 1), (dir.path / "good.png").string());
  const FewShotDataset ds = load_image_dir(dir.path.string(), 8, 10, 0);
  CHECK(ds.k() == 1);

  // Only undecodable files: error.
  TempDir dir2("allbad");
  std::ofstream bad2(dir2.path / "broken.png");
  bad2 << "still not a png";
  bad2.close();
  CHECK_THROWS_AS(load_image_dir(dir2.path.string(), 8, 1, 0), IoError);
}

TEST_CASE("round trip: saved images reload within quantization error") {
  TempDir dir("roundtrip");
  const int k = 4;
  std::vector<Tensor> originals;
  for (int i = 0; i < k; ++i) {
    originals.push_back(random_image(12, 50 + i));
    save_image(originals.back(), (dir.path / ("s" + std::to_string(i) + ".png")).string());
  }
  const FewShotDataset ds = load_image_dir(dir.path.string(), 12, k, 0);
  REQUIRE(ds.k() == k);
  // Match loaded images to originals via provenance file names.
  for (int i = 0; i < k; ++i) {
    const std::string& path = ds.provenance[static_cast<size_t>(i)];
    const int orig = path[path.size() - 5] - '0';
    const int64_t f = originals[0].numel();
    for (int64_t j = 0; j < f; ++j) {
      const float diff = std::abs(ds.images[i * f + j] - originals[static_cast<size_t>(orig)][j]);
      CHECK(diff <= 1.0f / 127.5f);
    }
  }
}

TEST_CASE("sample_batch: k=1 repeats the single image; deterministic") {
  FewShotDataset ds;
  ds.images = random_image(8, 3).reshaped({1, 3, 8, 8});
  ds.provenance = {"one"};
  Rng r1(4), r2(4);
  const Tensor b1 = sample_batch(ds, 5, r1);
  const Tensor b2 = sample_batch(ds, 5, r2);
  REQUIRE(b1.dim(0) == 5);
  const int64_t f = ds.images.numel();
  for (int i = 0; i < 5; ++i)
    for (int64_t j = 0; j < f; ++j) {
      CHECK(b1[i * f + j] == ds.images[j]);
      CHECK(b1[i * f + j] == b2[i * f + j]);
    }
}

TEST_CASE("iterate_batches: long-run selection frequency is uniform") {
  const int k = 7;
  FewShotDataset ds;
  ds.images = Tensor({k, 1, 1, 1});
  for (int i = 0; i < k; ++i) ds.images[i] = static_cast<float>(i) / 10.0f;
  ds.provenance.assign(static_cast<size_t>(k), "synthetic");
  BatchStream stream = iterate_batches(ds, 10, Rng(11));
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  const int64_t draws = 100000;
  for (int64_t b = 0; b < draws / 10; ++b) {
    const Tensor batch = stream.next();
    for (int i = 0; i < 10; ++i)
      ++counts[static_cast<size_t>(std::lround(batch[i] * 10.0f))];
  }
  for (int64_t c : counts)
    CHECK(std::abs(static_cast<double>(c) / draws - 1.0 / k) < 0.005);
}

TEST_CASE("FewShotDataset: invariant validation") {
  FewShotDataset ds;
  ds.images = Tensor({1, 1, 2, 2});
  ds.images[0] = 2.0f;  // out of range
  CHECK_THROWS_AS(ds.validate(), std::invalid_argument);
}

TEST_CASE("save_image_grid: tiles compose and reload") {
  TempDir dir("grid");
  Tensor imgs({4, 3, 8, 8});
  for (int i = 0; i < 4; ++i) {
    Tensor im = random_image(8, 200 + i);
    std::copy(im.data(), im.data() + im.numel(), imgs.data() + i * im.numel());
  }
  const std::string path = (dir.path / "grid.png").string();
  save_image_grid(imgs, 2, path);
  const Tensor grid = load_image(path);
  REQUIRE(grid.shape() == std::vector<int>({3, 16, 16}));
  // Top-left tile equals image 0 within quantization.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const float a = grid[(c * 16 + y) * 16 + x];
        const float b = imgs[(0 * 3 + c) * 64 + y * 8 + x];
        CHECK(std::abs(a - b) <= 1.0f / 127.5f);
      }
}
