#include <doctest.h>

#include <cmath>
#include <set>

#include "fsga/synthetic.hpp"

using namespace fsga;

TEST_CASE("make_shape_dataset: counting and labels") {
  const ShapeWorldSpec spec = shape_world_8(32, 500, 0.05);
  REQUIRE(spec.modes.size() == 8);
  Rng rng(1);
  const LabeledDataset ds = make_shape_dataset(spec, rng);
  CHECK(ds.images.dim(0) == 4000);
  CHECK(ds.labels.size() == 4000);
  std::set<int> seen(ds.labels.begin(), ds.labels.end());
  CHECK(seen.size() == 8);
}

TEST_CASE("make_shape_dataset: zero noise makes in-mode images pixel-identical") {
  const ShapeWorldSpec spec = shape_world_8(32, 3, 0.0);
  Rng rng(2);
  const LabeledDataset ds = make_shape_dataset(spec, rng);
  const int64_t f = ds.images.numel() / ds.images.dim(0);
  for (int mode = 0; mode < 8; ++mode) {
    const int base = mode * 3;
    for (int rep = 1; rep < 3; ++rep)
      for (int64_t j = 0; j < f; ++j)
        CHECK(ds.images[(base + rep) * f + j] == ds.images[base * f + j]);
  }
}

TEST_CASE("make_shape_dataset: pure function of (spec, rng state)") {
  const ShapeWorldSpec spec = shape_world_8(32, 4, 0.1);
  Rng r1(9), r2(9);
  const LabeledDataset a = make_shape_dataset(spec, r1);
  const LabeledDataset b = make_shape_dataset(spec, r2);
  for (int64_t i = 0; i < a.images.numel(); ++i) CHECK(a.images[i] == b.images[i]);
}

TEST_CASE("mode classifier: recovers labels exactly at zero noise") {
  const ShapeWorldSpec spec = shape_world_8(32, 2, 0.0);
  Rng rng(3);
  const LabeledDataset ds = make_shape_dataset(spec, rng);
  const ModeClassifier cls(spec);
  const int64_t f = ds.images.numel() / ds.images.dim(0);
  for (int i = 0; i < ds.images.dim(0); ++i)
    CHECK(cls.classify(ds.images.data() + i * f) == ds.labels[static_cast<size_t>(i)]);
}

TEST_CASE("mode classifier: robust at the default noise level") {
  const ShapeWorldSpec spec = shape_world_8(32, 50, 0.05);
  Rng rng(4);
  const LabeledDataset ds = make_shape_dataset(spec, rng);
  const ModeClassifier cls(spec);
  const int64_t f = ds.images.numel() / ds.images.dim(0);
  int correct = 0;
  for (int i = 0; i < ds.images.dim(0); ++i)
    correct += cls.classify(ds.images.data() + i * f) == ds.labels[static_cast<size_t>(i)];
  CHECK(correct == ds.images.dim(0));
}

TEST_CASE("make_fewshot_target: covers only chosen modes, classifier survives the hue shift") {
  const ShapeWorldSpec spec = shape_world_8(32, 10, 0.05);
  Rng rng(5);
  const std::vector<int> chosen = {0, 3, 5};
  const FewShotDataset target = make_fewshot_target(spec, chosen, 10, 120.0, rng);
  CHECK(target.k() == 10);
  target.validate();

  const ModeClassifier cls(spec);
  const int64_t f = target.images.numel() / target.k();
  std::set<int> found;
  for (int i = 0; i < target.k(); ++i) {
    const int mode = cls.classify(target.images.data() + i * f);
    found.insert(mode);
    // round-robin over chosen modes
    CHECK(mode == chosen[static_cast<size_t>(i) % chosen.size()]);
  }
  CHECK(found.size() <= 3);
}

TEST_CASE("make_fewshot_target: identity transform reproduces source-style renders") {
  ShapeWorldSpec spec = shape_world_8(32, 4, 0.0);
  Rng rng(6);
  const FewShotDataset target = make_fewshot_target(spec, {2}, 2, 0.0, rng);
  // Zero noise + identity transform: both images equal the mode-2 template.
  Rng tmpl_rng(0);
  Tensor tmpl({3, 32, 32});
  render_mode(spec, 2, 0.0, tmpl_rng, tmpl.data());
  const int64_t f = tmpl.numel();
  for (int i = 0; i < 2; ++i)
    for (int64_t j = 0; j < f; ++j) CHECK(target.images[i * f + j] == tmpl[j]);
}

TEST_CASE("hue_rotate: fixes the gray axis and preserves shape masks") {
  const ShapeWorldSpec spec = shape_world_8(32, 1, 0.0);
  Rng rng(7);
  Tensor img({1, 3, 32, 32});
  render_mode(spec, 4, 0.0, rng, img.data());
  const Tensor rotated = hue_rotate(img, 137.0);
  // Background pixels (all channels -1) stay put.
  CHECK(rotated[0] == doctest::Approx(-1.0f).epsilon(1e-6));
  // Some foreground pixel changed.
  bool changed = false;
  for (int64_t i = 0; i < img.numel(); ++i) changed = changed || std::abs(rotated[i] - img[i]) > 1e-4;
  CHECK(changed);
  // Identity at 0 degrees.
  const Tensor same = hue_rotate(img, 0.0);
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(same[i] == img[i]);
}

TEST_CASE("mode_coverage: template sets and degenerate sets") {
  const ShapeWorldSpec spec = shape_world_8(32, 1, 0.0);
  Rng rng(0);
  Tensor all({8, 3, 32, 32});
  const int64_t f = all.numel() / 8;
  for (int mode = 0; mode < 8; ++mode) render_mode(spec, mode, 0.0, rng, all.data() + mode * f);
  CHECK(mode_coverage(all, spec) == doctest::Approx(1.0));

  Tensor one({5, 3, 32, 32});
  for (int i = 0; i < 5; ++i) render_mode(spec, 2, 0.0, rng, one.data() + i * f);
  CHECK(mode_coverage(one, spec) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("mode_coverage: invariant to order and duplication") {
  const ShapeWorldSpec spec = shape_world_8(32, 1, 0.0);
  Rng rng(0);
  const int64_t f = 3LL * 32 * 32;
  Tensor set({4, 3, 32, 32});
  for (int i = 0; i < 4; ++i) render_mode(spec, i, 0.0, rng, set.data() + i * f);
  const double base = mode_coverage(set, spec);

  Tensor shuffled({4, 3, 32, 32});
  const int order[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i)
    std::copy(set.data() + order[i] * f, set.data() + (order[i] + 1) * f,
              shuffled.data() + i * f);
  CHECK(mode_coverage(shuffled, spec) == doctest::Approx(base));

  Tensor doubled({8, 3, 32, 32});
  std::copy(set.data(), set.data() + set.numel(), doubled.data());
  std::copy(set.data(), set.data() + set.numel(), doubled.data() + set.numel());
  CHECK(mode_coverage(doubled, spec) == doctest::Approx(base));
}

TEST_CASE("correspondence_score: identical batches correspond fully") {
  const ShapeWorldSpec spec = shape_world_8(32, 1, 0.0);
  Rng rng(0);
  const int64_t f = 3LL * 32 * 32;
  Tensor set({4, 3, 32, 32});
  for (int i = 0; i < 4; ++i) render_mode(spec, 2 * i, 0.0, rng, set.data() + i * f);
  CHECK(correspondence_score(set, set, spec) == doctest::Approx(1.0));
  // Recoloring preserves correspondence; moving the shape breaks it.
  CHECK(correspondence_score(set, hue_rotate(set, 120.0), spec) == doctest::Approx(1.0));
  // First column keeps its mode, the rest move to a different one.
  Tensor moved({4, 3, 32, 32});
  for (int i = 0; i < 4; ++i) render_mode(spec, i == 0 ? 0 : 1, 0.0, rng, moved.data() + i * f);
  CHECK(correspondence_score(set, moved, spec) == doctest::Approx(0.25));
}

TEST_CASE("shape world JSON round trip") {
  const ShapeWorldSpec spec = shape_world_8(32, 123, 0.07);
  const ShapeWorldSpec back = shape_world_from_json(shape_world_to_json(spec));
  CHECK(back.image_size == spec.image_size);
  CHECK(back.grid_cells == spec.grid_cells);
  CHECK(back.samples_per_mode == spec.samples_per_mode);
  CHECK(back.noise_level == doctest::Approx(spec.noise_level));
  REQUIRE(back.modes.size() == spec.modes.size());
  for (size_t i = 0; i < spec.modes.size(); ++i) CHECK(back.modes[i] == spec.modes[i]);
}

TEST_CASE("make_fewshot_target: argument validation") {
  const ShapeWorldSpec spec = shape_world_8();
  Rng rng(1);
  CHECK_THROWS_AS(make_fewshot_target(spec, {0}, 0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_fewshot_target(spec, {}, 3, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_fewshot_target(spec, {99}, 3, 0.0, rng), std::invalid_argument);
}
