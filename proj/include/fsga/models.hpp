#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fsga/graph.hpp"
#include "fsga/latent.hpp"
#include "fsga/nn.hpp"
#include "fsga/tensor.hpp"

namespace fsga {

// Per-layer generator activations for one noise batch, flattened per sample
// when consumed by the similarity losses.
struct ActivationStack {
  std::vector<std::pair<std::string, Tensor>> per_layer;

  const Tensor* find(std::string_view layer) const {
    for (const auto& [name, t] : per_layer)
      if (name == layer) return &t;
    return nullptr;
  }
  int batch_size() const { return per_layer.empty() ? 0 : per_layer.front().second.dim(0); }
};

// Upsampling conv generator: dense projection to a base grid, then
// upsample2 + conv3x3 + leaky-relu blocks, then conv3x3 + tanh to the image.
struct GeneratorArch {
  int latent_dim = 16;
  int base_size = 4;
  int base_channels = 64;
  std::vector<int> block_channels = {48, 32, 24};
  int out_channels = 3;
  float leaky_slope = 0.2f;

  int output_size() const { return base_size << block_channels.size(); }
  bool operator==(const GeneratorArch&) const = default;
};

struct ConvLayerSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  bool operator==(const ConvLayerSpec&) const = default;
};

// Conv trunk + scalar image head; selected trunk layers additionally feed
// 1x1-conv patch-logit heads. Both heads share all trunk weights.
struct DiscriminatorArch {
  int input_size = 32;
  int in_channels = 3;
  std::vector<ConvLayerSpec> convs;
  std::vector<int> patch_layers;  // indices into convs
  float leaky_slope = 0.2f;

  bool operator==(const DiscriminatorArch&) const = default;
};

class GeneratorHandle {
 public:
  GeneratorHandle() = default;
  // Fresh handle with seeded He-normal init.
  GeneratorHandle(GeneratorArch arch, uint64_t init_seed);

  const GeneratorArch& arch() const { return arch_; }
  LatentSpec latent_spec() const { return {arch_.latent_dim}; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  bool frozen() const { return frozen_; }
  const std::vector<std::string>& tap_layers() const { return tap_layers_; }

  // Builds the forward pass on a graph. trainable is ignored (forced off)
  // for frozen handles.
  struct Forward {
    Value image;
    std::vector<std::pair<std::string, Value>> taps;
  };
  Forward forward(Graph& g, Value noise, bool with_taps, bool trainable) const;

  uint64_t forward_count() const { return forward_count_; }

  friend GeneratorHandle clone_frozen(const GeneratorHandle& gen);
  friend class CheckpointCodec;

 private:
  GeneratorArch arch_;
  ParamSet params_;
  std::vector<std::string> tap_layers_;  // every block output plus "image"
  bool frozen_ = false;
  mutable uint64_t forward_count_ = 0;
};

class DiscriminatorHandle {
 public:
  DiscriminatorHandle() = default;
  DiscriminatorHandle(DiscriminatorArch arch, uint64_t init_seed);

  const DiscriminatorArch& arch() const { return arch_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  struct Forward {
    Value image_logits;                                   // (N, 1)
    std::vector<std::pair<std::string, Value>> patch_maps;  // (N,1,Hl,Wl) per patch layer
  };
  // One trunk pass producing both heads.
  Forward forward(Graph& g, Value images, bool trainable) const;

  std::string layer_name(int conv_index) const { return "conv" + std::to_string(conv_index); }
  uint64_t trunk_pass_count() const { return trunk_passes_; }
  void reset_trunk_pass_count() const { trunk_passes_ = 0; }

  friend class CheckpointCodec;

 private:
  DiscriminatorArch arch_;
  ParamSet params_;
  mutable uint64_t trunk_passes_ = 0;
};

// --- spec operations -------------------------------------------------------

// Runs the generator outside any training graph. Returns images (N x CHW)
// and, when with_taps, activations for exactly the tap layers.
std::pair<Tensor, std::optional<ActivationStack>> generate(const GeneratorHandle& gen,
                                                           const NoiseBatch& noise,
                                                           bool with_taps);

// Deep copy whose parameters never receive gradients.
GeneratorHandle clone_frozen(const GeneratorHandle& gen);

// Scalar image-head logits, one per input image.
Tensor discriminate_image(const DiscriminatorHandle& disc, const Tensor& images);

// One spatial logit map per patch layer.
std::vector<std::pair<std::string, Tensor>> discriminate_patch(const DiscriminatorHandle& disc,
                                                               const Tensor& images);

// Receptive-field extent of one cell of the named trunk layer, in input
// pixels, by the standard recurrence over kernel sizes and strides.
std::pair<int, int> effective_patch_size(const DiscriminatorHandle& disc,
                                         const std::string& layer);
std::pair<int, int> effective_patch_size(const DiscriminatorArch& arch, int conv_index);

// Input-pixel window [y0,y1]x[x0,x1] (clamped to the image) seen by cell
// (cy,cx) of the given trunk layer.
struct PixelWindow {
  int y0, y1, x0, x1;
  bool contains(int y, int x) const { return y >= y0 && y <= y1 && x >= x0 && x <= x1; }
};
PixelWindow patch_receptive_window(const DiscriminatorArch& arch, int conv_index, int cy, int cx);

// Spatial size of a trunk layer's activation map.
std::pair<int, int> trunk_layer_extent(const DiscriminatorArch& arch, int conv_index);

// Indices of trunk layers whose receptive field, as a fraction of input
// size, falls inside [lo, hi]. The defaults mirror a 22..61 px band at a
// 256 px input.
std::vector<int> select_patch_layers_in_band(const DiscriminatorArch& arch,
                                             double lo = 22.0 / 256.0,
                                             double hi = 61.0 / 256.0);

// --- reference configurations ---------------------------------------------

GeneratorArch toy_generator_arch(int image_size = 32, int latent_dim = 16);
DiscriminatorArch toy_discriminator_arch(int image_size = 32);
// Documented full-scale discriminator config; its patch layers land in the
// 22..61 px band at a 256 px input.
DiscriminatorArch reference_discriminator_256();

}  // namespace fsga
