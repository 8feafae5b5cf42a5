#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsga/data.hpp"
#include "fsga/rng.hpp"
#include "fsga/tensor.hpp"

namespace fsga {

enum class ShapeKind { square, circle };

// One structural mode: a shape kind drawn in one cell of a position grid,
// with a fixed foreground color.
struct ModeSpec {
  ShapeKind shape = ShapeKind::square;
  int cell = 0;  // index into a grid_cells x grid_cells layout
  float color[3] = {0.9f, 0.55f, 0.2f};

  bool operator==(const ModeSpec&) const = default;
};

// Procedural shape world: structural modes vary geometry, the few-shot
// "domain gap" is a color transform, so correspondence between source and
// adapted outputs is machine-checkable.
struct ShapeWorldSpec {
  int image_size = 32;
  int grid_cells = 2;
  std::vector<ModeSpec> modes;
  int samples_per_mode = 500;
  double noise_level = 0.05;
};

// The canonical 8-mode testbed: {square, circle} x 4 position cells.
ShapeWorldSpec shape_world_8(int image_size = 32, int samples_per_mode = 500,
                             double noise_level = 0.05);

// Renders one mode at the given noise level into dst (3 x S x S).
void render_mode(const ShapeWorldSpec& spec, int mode, double noise_level, Rng& rng,
                 float* dst);

struct LabeledDataset {
  Tensor images;  // (N, 3, S, S)
  std::vector<int> labels;
};

// Deterministic given rng; samples_per_mode images per mode, labels attached.
LabeledDataset make_shape_dataset(const ShapeWorldSpec& spec, Rng& rng);

// Global appearance transform: hue rotation about the RGB gray axis. Zero
// degrees is the identity. Preserves structure; the background (gray axis)
// is fixed.
Tensor hue_rotate(const Tensor& images, double degrees);

// k images drawn round-robin from the chosen modes, then hue-rotated: the
// synthetic analog of a style-changed target domain. Warns (stderr) when
// k exceeds the distinct variety available at zero noise.
FewShotDataset make_fewshot_target(const ShapeWorldSpec& spec,
                                   const std::vector<int>& chosen_modes, int k,
                                   double hue_degrees, Rng& rng);

// Template matcher over foreground masks; hue changes do not move the
// foreground, so classification is transform-invariant by construction.
class ModeClassifier {
 public:
  explicit ModeClassifier(const ShapeWorldSpec& spec);

  // Index of the best-matching mode; -1 if the best IoU is below min_iou.
  int classify(const float* image, double min_iou = 0.0) const;
  int classify(const Tensor& image, double min_iou = 0.0) const;
  double match_iou(const float* image, int mode) const;

  int mode_count() const { return static_cast<int>(masks_.size()); }

 private:
  int size_ = 0;
  std::vector<std::vector<uint8_t>> masks_;
};

// Fraction of modes receiving at least 1% of the classified samples.
// Samples whose best IoU falls below reject_iou are rejected.
double mode_coverage(const Tensor& samples, const ShapeWorldSpec& spec,
                     double reject_iou = 0.0);

// Fraction of latents whose source-output mode equals the adapted-output
// mode under the classifier (nearest-template, no rejection).
double correspondence_score(const Tensor& source_images, const Tensor& adapted_images,
                            const ShapeWorldSpec& spec);

// JSON round-trip so checkpoints can carry the testbed description.
std::string shape_world_to_json(const ShapeWorldSpec& spec);
ShapeWorldSpec shape_world_from_json(const std::string& json_text);

}  // namespace fsga
