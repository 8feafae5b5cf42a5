#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fsga/latent.hpp"
#include "fsga/models.hpp"
#include "fsga/nn.hpp"
#include "fsga/trainer_config.hpp"

namespace fsga {

inline constexpr uint32_t kCheckpointVersion = 1;

// Everything needed to resume a run exactly: adapted and frozen-source
// generator parameters, discriminator parameters, the anchor set, the
// config, the step index and master seed (per-purpose RNG streams are
// re-derived from these), and both optimizers' moments.
struct CheckpointBundle {
  std::string kind;  // "source" or "adaptation"
  uint64_t step = 0;
  uint64_t seed = 0;
  GeneratorHandle generator;
  std::optional<GeneratorHandle> frozen_source;  // adaptation bundles only
  DiscriminatorHandle discriminator;
  std::optional<AnchorSet> anchors;
  std::optional<AdaptationConfig> config;
  std::string shape_world_json;  // non-empty when trained on the testbed
  Adam opt_g, opt_d;
};

// Binary bundle file: magic, format version, JSON header (arches, config,
// tensor directory), raw tensor payload, CRC-32 footer. Same bundle, same
// bytes: save -> load -> save is byte-identical.
void save_checkpoint(const CheckpointBundle& bundle, const std::string& path);
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace fsga
