#include <doctest.h>

#include <cmath>
#include <vector>

#include "fsga/errors.hpp"
#include "fsga/metrics.hpp"
#include "fsga/rng.hpp"

using namespace fsga;

namespace {

Tensor random_images(int n, int c, int s, uint64_t seed, float scale = 0.5f) {
  Rng rng(seed);
  Tensor t({n, c, s, s});
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = std::clamp(scale * rng.normal_f(), -1.0f, 1.0f);
  return t;
}

// Brute-force intra-cluster diversity for the pixel extractor: nearest
// assignment and unordered-pair means, all inline.
double oracle_pixel_diversity(const Tensor& gen, const Tensor& train) {
  const int m = gen.dim(0), k = train.dim(0);
  const int64_t f = gen.numel() / m;
  auto mse = [&](const float* a, const float* b) {
    double s = 0;
    for (int64_t t = 0; t < f; ++t) {
      const double d = static_cast<double>(a[t]) - b[t];
      s += d * d;
    }
    return s / static_cast<double>(f);
  };
  std::vector<std::vector<int>> clusters(static_cast<size_t>(k));
  for (int i = 0; i < m; ++i) {
    int best = 0;
    double bd = mse(gen.data() + i * f, train.data());
    for (int j = 1; j < k; ++j) {
      const double d = mse(gen.data() + i * f, train.data() + j * f);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    clusters[static_cast<size_t>(best)].push_back(i);
  }
  double sum = 0;
  int counted = 0;
  for (const auto& idx : clusters) {
    if (idx.size() < 2) continue;
    double s = 0;
    int pairs = 0;
    for (size_t a = 0; a < idx.size(); ++a)
      for (size_t b = a + 1; b < idx.size(); ++b) {
        s += mse(gen.data() + idx[a] * f, gen.data() + idx[b] * f);
        ++pairs;
      }
    sum += s / pairs;
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

}  // namespace

TEST_CASE("perceptual_distance: identity, symmetry, positivity") {
  for (auto fx : {FeatureExtractor::pixel(), FeatureExtractor::fixed_random_conv(3, 16)}) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor a({3, 16, 16}), b({3, 16, 16});
      for (int64_t i = 0; i < a.numel(); ++i) a[i] = 0.4f * rng.normal_f();
      for (int64_t i = 0; i < b.numel(); ++i) b[i] = 0.4f * rng.normal_f();
      const double ab = perceptual_distance(a, b, fx);
      const double ba = perceptual_distance(b, a, fx);
      CHECK(ab == ba);  // exact symmetry
      CHECK(ab >= 0.0);
    }
    Tensor x({3, 16, 16});
    x.fill(0.25f);
    CHECK(perceptual_distance(x, x, fx) == 0.0);
  }
}

TEST_CASE("perceptual_distance: pixel-kind hand case equals 1.0") {
  Tensor a = Tensor::from({1, 2, 2}, {0, 0, 0, 0});
  Tensor b = Tensor::from({1, 2, 2}, {1, 1, 1, 1});
  CHECK(perceptual_distance(a, b, FeatureExtractor::pixel()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perceptual_distance: shape mismatch rejected") {
  CHECK_THROWS_AS(
      perceptual_distance(Tensor({3, 8, 8}), Tensor({3, 4, 4}), FeatureExtractor::pixel()),
      std::invalid_argument);
}

TEST_CASE("intra_cluster_diversity: memorizing generator scores zero") {
  const Tensor training = random_images(4, 3, 8, 5);
  // Generated = the k training images repeated.
  Tensor gen({12, 3, 8, 8});
  const int64_t f = training.numel() / 4;
  for (int i = 0; i < 12; ++i)
    std::copy(training.data() + (i % 4) * f, training.data() + (i % 4 + 1) * f,
              gen.data() + i * f);
  for (auto fx : {FeatureExtractor::pixel(), FeatureExtractor::fixed_random_conv(3, 8)}) {
    const DiversityResult r = intra_cluster_diversity(gen, training, fx);
    CHECK(r.score == 0.0);
    CHECK(r.excluded_clusters == 0);
  }
}

TEST_CASE("intra_cluster_diversity: all-identical generations score zero") {
  const Tensor training = random_images(3, 3, 8, 7);
  Tensor gen({6, 3, 8, 8});
  const Tensor one = random_images(1, 3, 8, 9);
  for (int i = 0; i < 6; ++i)
    std::copy(one.data(), one.data() + one.numel(), gen.data() + i * one.numel());
  const DiversityResult r = intra_cluster_diversity(gen, training, FeatureExtractor::pixel());
  CHECK(r.score == 0.0);
  // All six land in one cluster; the other two clusters are excluded.
  CHECK(r.excluded_clusters == 2);
}

TEST_CASE("intra_cluster_diversity: matches the brute-force oracle on hand instances") {
  // k=2, M=4 hand-placed pixel images.
  Tensor training({2, 1, 2, 2});
  training.fill(0.0f);
  for (int64_t i = 4; i < 8; ++i) training[i] = 1.0f;
  Tensor gen = Tensor::from({4, 1, 2, 2}, {0.1f, 0.1f, 0.1f, 0.1f, -0.1f, -0.1f, -0.1f, -0.1f,
                                           0.9f, 0.9f, 0.9f, 0.9f, 0.7f, 0.7f, 0.7f, 0.7f});
  const DiversityResult r = intra_cluster_diversity(gen, training, FeatureExtractor::pixel());
  CHECK(std::abs(r.score - oracle_pixel_diversity(gen, training)) < 1e-9);
  // Hand value 0.04 up to float rounding of the 0.1-grid pixel values.
  CHECK(r.score == doctest::Approx(0.04).epsilon(1e-6));
  CHECK(r.per_cluster[0] == doctest::Approx(0.04).epsilon(1e-6));
  CHECK(r.per_cluster[1] == doctest::Approx(0.04).epsilon(1e-6));
  CHECK(r.assignment.assignments == std::vector<int>({0, 0, 1, 1}));

  // Random instances against the same oracle.
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    const Tensor tr = random_images(3, 1, 4, seed);
    const Tensor gn = random_images(9, 1, 4, seed + 100);
    const DiversityResult rr = intra_cluster_diversity(gn, tr, FeatureExtractor::pixel());
    CHECK(std::abs(rr.score - oracle_pixel_diversity(gn, tr)) < 1e-9);
  }
}

TEST_CASE("intra_cluster_diversity: duplicates keep the metric well defined") {
  const Tensor training = random_images(2, 1, 4, 3);
  Tensor gen = random_images(4, 1, 4, 21);
  const DiversityResult before = intra_cluster_diversity(gen, training, FeatureExtractor::pixel());
  // Append an exact duplicate of generated sample 0.
  Tensor bigger({5, 1, 4, 4});
  std::copy(gen.data(), gen.data() + gen.numel(), bigger.data());
  std::copy(gen.data(), gen.data() + 16, bigger.data() + gen.numel());
  const DiversityResult after = intra_cluster_diversity(bigger, training, FeatureExtractor::pixel());
  CHECK(std::abs(after.score - oracle_pixel_diversity(bigger, training)) < 1e-9);
  CHECK(after.score <= before.score + 1e-12);  // a duplicate never increases the mean
}

TEST_CASE("density_coverage: identical sets reach coverage 1") {
  const Tensor feats = random_images(6, 1, 2, 4).reshaped({6, 4});
  const DensityCoverage dc = density_coverage(feats, feats);
  CHECK(dc.coverage == doctest::Approx(1.0));
  CHECK(dc.density >= 1.0);  // each fake sits at distance 0 inside its own ball
}

TEST_CASE("density_coverage: distant fakes score zero") {
  Tensor real = Tensor::from({3, 1}, {0.0f, 1.0f, 3.0f});
  Tensor fake = Tensor::from({2, 1}, {100.0f, -50.0f});
  const DensityCoverage dc = density_coverage(real, fake);
  CHECK(dc.density == 0.0);
  CHECK(dc.coverage == 0.0);
}

TEST_CASE("density_coverage: 1-D hand case matches ball-membership enumeration") {
  Tensor real = Tensor::from({3, 1}, {0.0f, 1.0f, 3.0f});
  Tensor fake = Tensor::from({2, 1}, {0.1f, 2.9f});
  const DensityCoverage dc = density_coverage(real, fake);
  // radii: 1 (to 1), 1 (to 0), 2 (to 1). 0.1 lies in balls of 0 and 1;
  // 2.9 lies in the ball of 3.
  CHECK(dc.density == doctest::Approx(3.0 / 2.0).epsilon(1e-12));
  CHECK(dc.coverage == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("density_coverage: brute-force enumeration on random small sets") {
  for (int d : {1, 2}) {
    Rng rng(40 + d);
    const int n = 8, m = 10;
    Tensor real({n, d}), fake({m, d});
    for (int64_t i = 0; i < real.numel(); ++i) real[i] = rng.normal_f();
    for (int64_t i = 0; i < fake.numel(); ++i) fake[i] = rng.normal_f();
    auto dist = [&](const float* a, const float* b) {
      double s = 0;
      for (int t = 0; t < d; ++t) {
        const double v = static_cast<double>(a[t]) - b[t];
        s += v * v;
      }
      return std::sqrt(s);
    };
    std::vector<double> radius(n, 1e300);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (j != i) radius[i] = std::min(radius[i], dist(real.data() + i * d, real.data() + j * d));
    int64_t contains = 0;
    int covered = 0;
    for (int i = 0; i < n; ++i) {
      bool any = false;
      for (int j = 0; j < m; ++j) {
        if (dist(fake.data() + j * d, real.data() + i * d) <= radius[i]) {
          ++contains;
          any = true;
        }
      }
      covered += any ? 1 : 0;
    }
    const DensityCoverage dc = density_coverage(real, fake);
    CHECK(dc.density == doctest::Approx(static_cast<double>(contains) / m).epsilon(1e-12));
    CHECK(dc.coverage == doctest::Approx(static_cast<double>(covered) / n).epsilon(1e-12));
  }
}

TEST_CASE("density_coverage: invariant under joint isometry") {
  Rng rng(55);
  const int n = 7, m = 9;
  Tensor real({n, 2}), fake({m, 2});
  for (int64_t i = 0; i < real.numel(); ++i) real[i] = rng.normal_f();
  for (int64_t i = 0; i < fake.numel(); ++i) fake[i] = rng.normal_f();
  const DensityCoverage base = density_coverage(real, fake);

  const double th = 1.1;
  auto rotate = [&](Tensor t) {
    for (int i = 0; i < t.dim(0); ++i) {
      const double x = t[i * 2], y = t[i * 2 + 1];
      t[i * 2] = static_cast<float>(std::cos(th) * x - std::sin(th) * y + 3.0);
      t[i * 2 + 1] = static_cast<float>(std::sin(th) * x + std::cos(th) * y - 1.5);
    }
    return t;
  };
  const DensityCoverage moved = density_coverage(rotate(real), rotate(fake));
  CHECK(moved.density == doctest::Approx(base.density).epsilon(1e-9));
  CHECK(moved.coverage == doctest::Approx(base.coverage).epsilon(1e-9));
}

TEST_CASE("density_coverage: fewer than two reals rejected") {
  CHECK_THROWS_AS(density_coverage(Tensor({1, 2}), Tensor({3, 2})), std::invalid_argument);
}

TEST_CASE("frechet_distance: scalar closed forms") {
  const Tensor m0 = Tensor::from({1}, {0.0f});
  const Tensor m1 = Tensor::from({1}, {1.0f});
  const Tensor v1 = Tensor::from({1, 1}, {1.0f});
  const Tensor v4 = Tensor::from({1, 1}, {4.0f});
  CHECK(frechet_distance(m0, v1, m0, v1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(frechet_distance(m0, v1, m1, v4) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("frechet_distance: identical Gaussians and pure mean shifts") {
  Rng rng(8);
  const int d = 5;
  Tensor b({d, d});
  for (int64_t i = 0; i < b.numel(); ++i) b[i] = rng.normal_f();
  Tensor cov({d, d});
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      double s = 0;
      for (int t = 0; t < d; ++t) s += static_cast<double>(b[t * d + r]) * b[t * d + c];
      cov[r * d + c] = static_cast<float>(s / d + (r == c ? 0.1 : 0.0));
    }
  Tensor mean({d}), shifted({d});
  double norm2 = 0;
  for (int i = 0; i < d; ++i) {
    mean[i] = rng.normal_f();
    shifted[i] = mean[i] + 0.5f * (i + 1);
    const double v = static_cast<double>(shifted[i]) - mean[i];
    norm2 += v * v;
  }
  CHECK(frechet_distance(mean, cov, mean, cov) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(frechet_distance(mean, cov, shifted, cov) == doctest::Approx(norm2).epsilon(1e-6));
  // symmetry
  Tensor cov2 = cov;
  for (int i = 0; i < d; ++i) cov2[i * d + i] += 0.7f;
  CHECK(frechet_distance(mean, cov, shifted, cov2) ==
        doctest::Approx(frechet_distance(shifted, cov2, mean, cov)).epsilon(1e-7));
}

TEST_CASE("frechet_distance: non-PSD input raises") {
  const Tensor m = Tensor::from({2}, {0.0f, 0.0f});
  const Tensor bad = Tensor::from({2, 2}, {-1.0f, 0.0f, 0.0f, -1.0f});
  const Tensor good = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  CHECK_THROWS_AS(frechet_distance(m, bad, m, good), NumericError);
  const Tensor asym = Tensor::from({2, 2}, {1.0f, 0.5f, -0.5f, 1.0f});
  CHECK_THROWS_AS(frechet_distance(m, asym, m, good), std::invalid_argument);
}

TEST_CASE("feature_moments: hand case") {
  const Tensor feats = Tensor::from({2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
  const auto [mean, cov] = feature_moments(feats);
  CHECK(mean[0] == doctest::Approx(1.0));
  CHECK(mean[1] == doctest::Approx(2.0));
  // unbiased: var = ((0-1)^2 + (2-1)^2) / 1 = 2
  CHECK(cov[0] == doctest::Approx(2.0));
  CHECK(cov[3] == doctest::Approx(2.0));
  CHECK(cov[1] == doctest::Approx(2.0));
}

TEST_CASE("extractor embeddings have fixed dimension and are deterministic") {
  const FeatureExtractor fx = FeatureExtractor::fixed_random_conv(3, 16, 9);
  const Tensor imgs = random_images(4, 3, 16, 2);
  const Tensor e1 = fx.embed(imgs);
  const Tensor e2 = FeatureExtractor::fixed_random_conv(3, 16, 9).embed(imgs);
  REQUIRE(e1.shape() == std::vector<int>({4, 16 + 32 + 48}));
  for (int64_t i = 0; i < e1.numel(); ++i) CHECK(e1[i] == e2[i]);
}
