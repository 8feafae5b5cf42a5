#include "fsga/models.hpp"

#include <cmath>
#include <stdexcept>

#include "fsga/errors.hpp"

namespace fsga {

namespace {

void check_image_shape(const Tensor& images, const DiscriminatorArch& arch) {
  if (images.rank() != 4 || images.dim(1) != arch.in_channels ||
      images.dim(2) != arch.input_size || images.dim(3) != arch.input_size)
    throw std::invalid_argument("discriminator: image shape " +
                                Tensor::shape_str(images.shape()) + " does not match input " +
                                std::to_string(arch.input_size));
}

}  // namespace

GeneratorHandle::GeneratorHandle(GeneratorArch arch, uint64_t init_seed) : arch_(std::move(arch)) {
  Rng rng = Rng::derive(init_seed, "generator-init", 0);
  const int proj = arch_.base_channels * arch_.base_size * arch_.base_size;
  init_normal(params_.add("dense.w", Tensor({arch_.latent_dim, proj})), he_std(arch_.latent_dim), rng);
  params_.add("dense.b", Tensor({proj}));
  int in_ch = arch_.base_channels;
  for (size_t i = 0; i < arch_.block_channels.size(); ++i) {
    const int out_ch = arch_.block_channels[i];
    const std::string base = "block" + std::to_string(i);
    init_normal(params_.add(base + ".w", Tensor({out_ch, in_ch, 3, 3})), he_std(in_ch * 9), rng);
    params_.add(base + ".b", Tensor({out_ch}));
    tap_layers_.push_back(base);
    in_ch = out_ch;
  }
  init_normal(params_.add("image.w", Tensor({arch_.out_channels, in_ch, 3, 3})), he_std(in_ch * 9), rng);
  params_.add("image.b", Tensor({arch_.out_channels}));
  tap_layers_.push_back("image");

  // Tap activations must have nonzero norm per sample, or the cosine
  // similarities downstream are undefined.
  LatentSpec spec{arch_.latent_dim};
  Rng probe_rng = Rng::derive(init_seed, "generator-init-probe", 0);
  NoiseBatch probe = sample_prior(spec, 2, probe_rng);
  auto [images, acts] = generate(*this, probe, true);
  (void)images;
  for (const auto& [name, t] : acts->per_layer) {
    const int n = t.dim(0);
    const int64_t f = t.numel() / n;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < f; ++j) {
        const float v = t[i * f + j];
        s += static_cast<double>(v) * v;
      }
      if (s <= 0.0)
        throw NumericError("generator init: zero-norm activation at tap " + name);
    }
  }
}

GeneratorHandle::Forward GeneratorHandle::forward(Graph& g, Value noise, bool with_taps,
                                                  bool trainable) const {
  ++forward_count_;
  const bool train = trainable && !frozen_;
  auto& self = const_cast<GeneratorHandle&>(*this);
  auto p = [&](const char* name) {
    return g.param(self.params_.find(name), train);
  };

  Forward fwd;
  Value h = g.dense(noise, p("dense.w"), p("dense.b"));
  const int n = g.val(noise).dim(0);
  h = g.reshape(h, {n, arch_.base_channels, arch_.base_size, arch_.base_size});
  h = g.leaky_relu(h, arch_.leaky_slope);
  for (size_t i = 0; i < arch_.block_channels.size(); ++i) {
    const std::string base = "block" + std::to_string(i);
    h = g.upsample2(h);
    h = g.conv2d(h, g.param(self.params_.find(base + ".w"), train),
                 g.param(self.params_.find(base + ".b"), train), 1, 1);
    h = g.leaky_relu(h, arch_.leaky_slope);
    if (with_taps) fwd.taps.emplace_back(base, h);
  }
  h = g.conv2d(h, p("image.w"), p("image.b"), 1, 1);
  fwd.image = g.tanh_act(h);
  if (with_taps) fwd.taps.emplace_back("image", fwd.image);
  return fwd;
}

GeneratorHandle clone_frozen(const GeneratorHandle& gen) {
  GeneratorHandle copy;
  copy.arch_ = gen.arch_;
  copy.params_ = gen.params_;
  copy.tap_layers_ = gen.tap_layers_;
  copy.frozen_ = true;
  return copy;
}

std::pair<Tensor, std::optional<ActivationStack>> generate(const GeneratorHandle& gen,
                                                           const NoiseBatch& noise,
                                                           bool with_taps) {
  if (noise.dim() != gen.arch().latent_dim)
    throw std::invalid_argument("generate: noise dim " + std::to_string(noise.dim()) +
                                " != latent dim " + std::to_string(gen.arch().latent_dim));
  Graph g;
  Value z = g.input(noise.vectors);
  auto fwd = gen.forward(g, z, with_taps, false);
  std::optional<ActivationStack> stack;
  if (with_taps) {
    stack.emplace();
    for (auto& [name, v] : fwd.taps) stack->per_layer.emplace_back(name, g.val(v));
  }
  return {g.val(fwd.image), std::move(stack)};
}

DiscriminatorHandle::DiscriminatorHandle(DiscriminatorArch arch, uint64_t init_seed)
    : arch_(std::move(arch)) {
  if (arch_.convs.empty()) throw std::invalid_argument("discriminator: empty conv trunk");
  for (int idx : arch_.patch_layers)
    if (idx < 0 || idx >= static_cast<int>(arch_.convs.size()))
      throw std::invalid_argument("discriminator: patch layer index out of range");
  Rng rng = Rng::derive(init_seed, "discriminator-init", 0);
  int ch = arch_.in_channels;
  int size = arch_.input_size;
  for (size_t i = 0; i < arch_.convs.size(); ++i) {
    const ConvLayerSpec& c = arch_.convs[i];
    const std::string base = layer_name(static_cast<int>(i));
    init_normal(params_.add(base + ".w", Tensor({c.out_channels, ch, c.kernel, c.kernel})),
                he_std(ch * c.kernel * c.kernel), rng);
    params_.add(base + ".b", Tensor({c.out_channels}));
    ch = c.out_channels;
    size = (size + 2 * c.pad - c.kernel) / c.stride + 1;
    if (size < 1) throw std::invalid_argument("discriminator: trunk collapses below 1x1");
  }
  for (int idx : arch_.patch_layers) {
    const std::string base = "patch" + std::to_string(idx);
    const int in_ch = arch_.convs[static_cast<size_t>(idx)].out_channels;
    init_normal(params_.add(base + ".w", Tensor({1, in_ch, 1, 1})), he_std(in_ch), rng);
    params_.add(base + ".b", Tensor({1}));
  }
  init_normal(params_.add("head.w", Tensor({ch * size * size, 1})), he_std(ch * size * size), rng);
  params_.add("head.b", Tensor({1}));
}

DiscriminatorHandle::Forward DiscriminatorHandle::forward(Graph& g, Value images,
                                                          bool trainable) const {
  check_image_shape(g.val(images), arch_);
  ++trunk_passes_;
  auto& self = const_cast<DiscriminatorHandle&>(*this);
  Forward fwd;
  Value h = images;
  for (size_t i = 0; i < arch_.convs.size(); ++i) {
    const ConvLayerSpec& c = arch_.convs[i];
    const std::string base = self.layer_name(static_cast<int>(i));
    h = g.conv2d(h, g.param(self.params_.find(base + ".w"), trainable),
                 g.param(self.params_.find(base + ".b"), trainable), c.stride, c.pad);
    h = g.leaky_relu(h, arch_.leaky_slope);
    for (int idx : arch_.patch_layers) {
      if (idx != static_cast<int>(i)) continue;
      const std::string pb = "patch" + std::to_string(idx);
      Value pm = g.conv2d(h, g.param(self.params_.find(pb + ".w"), trainable),
                          g.param(self.params_.find(pb + ".b"), trainable), 1, 0);
      fwd.patch_maps.emplace_back(base, pm);
    }
  }
  const Tensor& ht = g.val(h);
  const int n = ht.dim(0);
  h = g.reshape(h, {n, static_cast<int>(ht.numel() / n)});
  fwd.image_logits = g.dense(h, g.param(self.params_.find("head.w"), trainable),
                             g.param(self.params_.find("head.b"), trainable));
  return fwd;
}

Tensor discriminate_image(const DiscriminatorHandle& disc, const Tensor& images) {
  Graph g;
  auto fwd = disc.forward(g, g.input(images), false);
  return g.val(fwd.image_logits);
}

std::vector<std::pair<std::string, Tensor>> discriminate_patch(const DiscriminatorHandle& disc,
                                                               const Tensor& images) {
  Graph g;
  auto fwd = disc.forward(g, g.input(images), false);
  std::vector<std::pair<std::string, Tensor>> maps;
  for (auto& [name, v] : fwd.patch_maps) maps.emplace_back(name, g.val(v));
  return maps;
}

std::pair<int, int> effective_patch_size(const DiscriminatorArch& arch, int conv_index) {
  if (conv_index < 0 || conv_index >= static_cast<int>(arch.convs.size()))
    throw std::invalid_argument("effective_patch_size: unknown layer index " +
                                std::to_string(conv_index));
  int rf = 1, jump = 1;
  for (int l = 0; l <= conv_index; ++l) {
    rf += (arch.convs[static_cast<size_t>(l)].kernel - 1) * jump;
    jump *= arch.convs[static_cast<size_t>(l)].stride;
  }
  return {rf, rf};
}

std::pair<int, int> effective_patch_size(const DiscriminatorHandle& disc,
                                         const std::string& layer) {
  for (size_t i = 0; i < disc.arch().convs.size(); ++i) {
    if (disc.layer_name(static_cast<int>(i)) == layer) {
      bool tapped = false;
      for (int idx : disc.arch().patch_layers) tapped = tapped || idx == static_cast<int>(i);
      if (!tapped)
        throw std::invalid_argument("effective_patch_size: " + layer + " is not a patch layer");
      return effective_patch_size(disc.arch(), static_cast<int>(i));
    }
  }
  throw std::invalid_argument("effective_patch_size: unknown layer " + layer);
}

PixelWindow patch_receptive_window(const DiscriminatorArch& arch, int conv_index, int cy, int cx) {
  auto [rf, rf_w] = effective_patch_size(arch, conv_index);
  (void)rf_w;
  // Top-left input index of cell i at layer L is i*jump + offset, where
  // offset accumulates -pad at each layer scaled by the jump below it.
  int jump = 1, offset = 0;
  for (int l = 0; l <= conv_index; ++l) {
    offset -= arch.convs[static_cast<size_t>(l)].pad * jump;
    jump *= arch.convs[static_cast<size_t>(l)].stride;
  }
  const int s = arch.input_size;
  PixelWindow w{};
  w.y0 = std::max(0, cy * jump + offset);
  w.x0 = std::max(0, cx * jump + offset);
  w.y1 = std::min(s - 1, cy * jump + offset + rf - 1);
  w.x1 = std::min(s - 1, cx * jump + offset + rf - 1);
  return w;
}

std::pair<int, int> trunk_layer_extent(const DiscriminatorArch& arch, int conv_index) {
  int size = arch.input_size;
  for (int l = 0; l <= conv_index; ++l) {
    const ConvLayerSpec& c = arch.convs[static_cast<size_t>(l)];
    size = (size + 2 * c.pad - c.kernel) / c.stride + 1;
  }
  return {size, size};
}

std::vector<int> select_patch_layers_in_band(const DiscriminatorArch& arch, double lo, double hi) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(arch.convs.size()); ++i) {
    const double ratio =
        static_cast<double>(effective_patch_size(arch, i).first) / arch.input_size;
    if (ratio >= lo && ratio <= hi) out.push_back(i);
  }
  return out;
}

GeneratorArch toy_generator_arch(int image_size, int latent_dim) {
  GeneratorArch arch;
  arch.latent_dim = latent_dim;
  arch.base_size = 4;
  arch.base_channels = 48;
  if (image_size == 32) {
    arch.block_channels = {32, 24, 16};
  } else if (image_size == 64) {
    arch.block_channels = {32, 24, 16, 12};
  } else {
    throw std::invalid_argument("toy_generator_arch: supported sizes are 32 and 64");
  }
  return arch;
}

DiscriminatorArch toy_discriminator_arch(int image_size) {
  DiscriminatorArch arch;
  arch.input_size = image_size;
  if (image_size == 32) {
    arch.convs = {{16, 3, 1, 1}, {24, 4, 2, 1}, {32, 3, 1, 1}, {48, 4, 2, 1}, {64, 4, 2, 1}};
  } else if (image_size == 64) {
    arch.convs = {{16, 3, 1, 1}, {24, 4, 2, 1}, {32, 3, 1, 1},
                  {48, 4, 2, 1}, {48, 3, 1, 1}, {64, 4, 2, 1}};
  } else {
    throw std::invalid_argument("toy_discriminator_arch: supported sizes are 32 and 64");
  }
  arch.patch_layers = select_patch_layers_in_band(arch);
  return arch;
}

DiscriminatorArch reference_discriminator_256() {
  DiscriminatorArch arch;
  arch.input_size = 256;
  arch.convs = {{32, 3, 1, 1},  {64, 3, 1, 1},  {64, 3, 2, 1},  {128, 3, 1, 1}, {128, 3, 2, 1},
                {192, 3, 1, 1}, {192, 3, 2, 1}, {256, 3, 1, 1}, {256, 3, 2, 1}};
  arch.patch_layers = select_patch_layers_in_band(arch);
  return arch;
}

}  // namespace fsga
