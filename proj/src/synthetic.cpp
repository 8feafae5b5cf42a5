#include "fsga/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fsga/errors.hpp"

namespace fsga {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr float kBackground = -1.0f;
// A pixel is foreground when its brightest channel, mapped to [0,1],
// exceeds this.
constexpr double kForegroundLevel = 0.25;

struct CellGeometry {
  double cx, cy, extent;  // shape center and characteristic size in pixels
};

CellGeometry cell_geometry(const ShapeWorldSpec& spec, int cell) {
  const double cs = static_cast<double>(spec.image_size) / spec.grid_cells;
  const int gx = cell % spec.grid_cells;
  const int gy = cell / spec.grid_cells;
  return {(gx + 0.5) * cs, (gy + 0.5) * cs, cs};
}

// Coverage in [0,1] of pixel (x,y) by the mode's shape.
double shape_coverage(const ShapeWorldSpec& spec, const ModeSpec& mode, int x, int y) {
  const CellGeometry g = cell_geometry(spec, mode.cell);
  const double px = x + 0.5, py = y + 0.5;
  if (mode.shape == ShapeKind::square) {
    const double half = 0.32 * g.extent;
    const double ox = std::clamp(std::min(px + 0.5, g.cx + half) - std::max(px - 0.5, g.cx - half), 0.0, 1.0);
    const double oy = std::clamp(std::min(py + 0.5, g.cy + half) - std::max(py - 0.5, g.cy - half), 0.0, 1.0);
    return ox * oy;
  }
  const double r = 0.36 * g.extent;
  const double d = std::hypot(px - g.cx, py - g.cy);
  return std::clamp(r - d + 0.5, 0.0, 1.0);
}

}  // namespace

ShapeWorldSpec shape_world_8(int image_size, int samples_per_mode, double noise_level) {
  ShapeWorldSpec spec;
  spec.image_size = image_size;
  spec.grid_cells = 2;
  spec.samples_per_mode = samples_per_mode;
  spec.noise_level = noise_level;
  for (int cell = 0; cell < 4; ++cell) {
    for (ShapeKind kind : {ShapeKind::square, ShapeKind::circle}) {
      ModeSpec m;
      m.shape = kind;
      m.cell = cell;
      spec.modes.push_back(m);
    }
  }
  return spec;
}

void render_mode(const ShapeWorldSpec& spec, int mode, double noise_level, Rng& rng,
                 float* dst) {
  if (mode < 0 || mode >= static_cast<int>(spec.modes.size()))
    throw std::invalid_argument("render_mode: mode index out of range");
  const ModeSpec& m = spec.modes[static_cast<size_t>(mode)];
  const int s = spec.image_size;
  const int64_t plane = static_cast<int64_t>(s) * s;
  const double brightness =
      noise_level > 0.0 ? std::clamp(1.0 + noise_level * rng.normal(), 0.5, 1.5) : 1.0;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double a = shape_coverage(spec, m, x, y) * brightness;
      const int64_t off = static_cast<int64_t>(y) * s + x;
      for (int c = 0; c < 3; ++c) {
        double v = kBackground + a * (m.color[c] - kBackground);
        if (noise_level > 0.0) v += 0.5 * noise_level * rng.normal();
        dst[c * plane + off] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }
}

LabeledDataset make_shape_dataset(const ShapeWorldSpec& spec, Rng& rng) {
  if (spec.modes.size() < 2)
    throw std::invalid_argument("make_shape_dataset: need at least 2 modes");
  const int per = spec.samples_per_mode;
  const int n = per * static_cast<int>(spec.modes.size());
  LabeledDataset ds;
  ds.images = Tensor({n, 3, spec.image_size, spec.image_size});
  ds.labels.resize(static_cast<size_t>(n));
  const int64_t sample = 3LL * spec.image_size * spec.image_size;
  int idx = 0;
  for (int mode = 0; mode < static_cast<int>(spec.modes.size()); ++mode) {
    for (int i = 0; i < per; ++i, ++idx) {
      render_mode(spec, mode, spec.noise_level, rng, ds.images.data() + idx * sample);
      ds.labels[static_cast<size_t>(idx)] = mode;
    }
  }
  return ds;
}

Tensor hue_rotate(const Tensor& images, double degrees) {
  if (degrees == 0.0) return images;
  // Rodrigues rotation about the (1,1,1)/sqrt(3) axis.
  const double t = degrees * kPi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double u = 1.0 / 3.0;
  const double k = std::sqrt(1.0 / 3.0);
  double rot[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot[i][j] = u * (1.0 - c) + (i == j ? c : 0.0);
  // Cross-product terms: K = [[0,-k,k],[k,0,-k],[-k,k,0]] scaled by sin.
  rot[0][1] -= k * s;
  rot[0][2] += k * s;
  rot[1][0] += k * s;
  rot[1][2] -= k * s;
  rot[2][0] -= k * s;
  rot[2][1] += k * s;

  const bool batched = images.rank() == 4;
  const int n = batched ? images.dim(0) : 1;
  const int ch = batched ? images.dim(1) : images.dim(0);
  if (ch != 3) throw std::invalid_argument("hue_rotate: expects 3 channels");
  const int64_t plane = images.numel() / (static_cast<int64_t>(n) * 3);
  Tensor out(images.shape());
  for (int i = 0; i < n; ++i) {
    const float* src = images.data() + static_cast<int64_t>(i) * 3 * plane;
    float* dst = out.data() + static_cast<int64_t>(i) * 3 * plane;
    for (int64_t p = 0; p < plane; ++p) {
      const double r = src[0 * plane + p], g = src[1 * plane + p], b = src[2 * plane + p];
      for (int cdst = 0; cdst < 3; ++cdst) {
        const double v = rot[cdst][0] * r + rot[cdst][1] * g + rot[cdst][2] * b;
        dst[cdst * plane + p] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }
  return out;
}

FewShotDataset make_fewshot_target(const ShapeWorldSpec& spec,
                                   const std::vector<int>& chosen_modes, int k,
                                   double hue_degrees, Rng& rng) {
  if (k < 1) throw std::invalid_argument("make_fewshot_target: k must be >= 1");
  if (chosen_modes.empty())
    throw std::invalid_argument("make_fewshot_target: chosen_modes must be non-empty");
  for (int m : chosen_modes)
    if (m < 0 || m >= static_cast<int>(spec.modes.size()))
      throw std::invalid_argument("make_fewshot_target: mode index out of range");
  if (spec.noise_level == 0.0 && k > static_cast<int>(chosen_modes.size()))
    std::cerr << "make_fewshot_target: k=" << k << " exceeds the " << chosen_modes.size()
              << " distinct images available at zero noise; duplicates will appear\n";

  Tensor raw({k, 3, spec.image_size, spec.image_size});
  const int64_t sample = 3LL * spec.image_size * spec.image_size;
  std::vector<std::string> tags;
  for (int i = 0; i < k; ++i) {
    const int mode = chosen_modes[static_cast<size_t>(i) % chosen_modes.size()];
    render_mode(spec, mode, spec.noise_level, rng, raw.data() + i * sample);
    tags.push_back("shapeworld:mode=" + std::to_string(mode) +
                   ":hue=" + std::to_string(hue_degrees));
  }
  FewShotDataset ds;
  ds.images = hue_rotate(raw, hue_degrees);
  ds.provenance = std::move(tags);
  ds.validate();
  return ds;
}

ModeClassifier::ModeClassifier(const ShapeWorldSpec& spec) : size_(spec.image_size) {
  const int64_t plane = static_cast<int64_t>(size_) * size_;
  Rng rng(0);  // templates are rendered at zero noise; rng is unused
  std::vector<float> tmpl(static_cast<size_t>(3 * plane));
  for (int mode = 0; mode < static_cast<int>(spec.modes.size()); ++mode) {
    render_mode(spec, mode, 0.0, rng, tmpl.data());
    std::vector<uint8_t> mask(static_cast<size_t>(plane));
    for (int64_t p = 0; p < plane; ++p) {
      const double level =
          (std::max({tmpl[static_cast<size_t>(p)], tmpl[static_cast<size_t>(plane + p)],
                     tmpl[static_cast<size_t>(2 * plane + p)]}) + 1.0) / 2.0;
      mask[static_cast<size_t>(p)] = level > kForegroundLevel ? 1 : 0;
    }
    masks_.push_back(std::move(mask));
  }
  // Modes must be pairwise distinguishable: each template must match itself.
  for (int mode = 0; mode < static_cast<int>(spec.modes.size()); ++mode) {
    render_mode(spec, mode, 0.0, rng, tmpl.data());
    if (classify(tmpl.data()) != mode)
      throw std::invalid_argument("ShapeWorldSpec: modes are not distinguishable");
  }
}

double ModeClassifier::match_iou(const float* image, int mode) const {
  const int64_t plane = static_cast<int64_t>(size_) * size_;
  const auto& m = masks_[static_cast<size_t>(mode)];
  int64_t inter = 0, uni = 0;
  for (int64_t p = 0; p < plane; ++p) {
    const double level =
        (std::max({image[p], image[plane + p], image[2 * plane + p]}) + 1.0) / 2.0;
    const bool fg = level > kForegroundLevel;
    const bool tm = m[static_cast<size_t>(p)] != 0;
    inter += (fg && tm) ? 1 : 0;
    uni += (fg || tm) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

int ModeClassifier::classify(const float* image, double min_iou) const {
  int best = 0;
  double best_iou = match_iou(image, 0);
  for (int mode = 1; mode < mode_count(); ++mode) {
    const double iou = match_iou(image, mode);
    if (iou > best_iou) {
      best_iou = iou;
      best = mode;
    }
  }
  return best_iou >= min_iou ? best : -1;
}

int ModeClassifier::classify(const Tensor& image, double min_iou) const {
  if (image.rank() != 3 || image.dim(1) != size_)
    throw std::invalid_argument("ModeClassifier: image shape mismatch");
  return classify(image.data(), min_iou);
}

double mode_coverage(const Tensor& samples, const ShapeWorldSpec& spec, double reject_iou) {
  if (samples.rank() != 4 || samples.dim(0) < 1)
    throw std::invalid_argument("mode_coverage: samples must be a non-empty NCHW batch");
  const ModeClassifier cls(spec);
  const int n = samples.dim(0);
  const int64_t sample = samples.numel() / n;
  std::vector<int64_t> counts(spec.modes.size(), 0);
  for (int i = 0; i < n; ++i) {
    const int mode = cls.classify(samples.data() + static_cast<int64_t>(i) * sample, reject_iou);
    if (mode >= 0) ++counts[static_cast<size_t>(mode)];
  }
  int covered = 0;
  for (int64_t c : counts)
    if (c * 100 >= n) ++covered;  // at least 1% of samples
  return static_cast<double>(covered) / static_cast<double>(spec.modes.size());
}

double correspondence_score(const Tensor& source_images, const Tensor& adapted_images,
                            const ShapeWorldSpec& spec) {
  if (!source_images.same_shape(adapted_images))
    throw std::invalid_argument("correspondence_score: batch shapes differ");
  if (source_images.rank() != 4)
    throw std::invalid_argument("correspondence_score: expects NCHW batches");
  const ModeClassifier cls(spec);
  const int n = source_images.dim(0);
  const int64_t sample = source_images.numel() / n;
  int equal = 0;
  for (int i = 0; i < n; ++i) {
    const int ms = cls.classify(source_images.data() + static_cast<int64_t>(i) * sample);
    const int ma = cls.classify(adapted_images.data() + static_cast<int64_t>(i) * sample);
    equal += (ms == ma) ? 1 : 0;
  }
  return static_cast<double>(equal) / n;
}

std::string shape_world_to_json(const ShapeWorldSpec& spec) {
  json j;
  j["image_size"] = spec.image_size;
  j["grid_cells"] = spec.grid_cells;
  j["samples_per_mode"] = spec.samples_per_mode;
  j["noise_level"] = spec.noise_level;
  j["modes"] = json::array();
  for (const ModeSpec& m : spec.modes) {
    json jm;
    jm["shape"] = m.shape == ShapeKind::square ? "square" : "circle";
    jm["cell"] = m.cell;
    jm["color"] = {m.color[0], m.color[1], m.color[2]};
    j["modes"].push_back(jm);
  }
  return j.dump();
}

ShapeWorldSpec shape_world_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  ShapeWorldSpec spec;
  spec.image_size = j.at("image_size").get<int>();
  spec.grid_cells = j.at("grid_cells").get<int>();
  spec.samples_per_mode = j.at("samples_per_mode").get<int>();
  spec.noise_level = j.at("noise_level").get<double>();
  spec.modes.clear();
  for (const json& jm : j.at("modes")) {
    ModeSpec m;
    m.shape = jm.at("shape").get<std::string>() == "square" ? ShapeKind::square
                                                            : ShapeKind::circle;
    m.cell = jm.at("cell").get<int>();
    for (int c = 0; c < 3; ++c) m.color[c] = jm.at("color")[static_cast<size_t>(c)].get<float>();
    spec.modes.push_back(m);
  }
  return spec;
}

}  // namespace fsga
