#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace fsga {

// How realism is enforced on generated images. anchor_relaxed is the
// method: full-image adversarial loss on anchor-region samples, patch-level
// loss on full-prior samples. image_only applies the image head to prior
// samples (plain fine-tuning when lambda = 0); patch_only applies just the
// patch head to prior samples.
enum class RealismMode { anchor_relaxed, image_only, patch_only };

std::string to_string(RealismMode mode);
RealismMode realism_mode_from_string(const std::string& s);

struct AdaptationConfig {
  double lambda = 1e3;          // distance-consistency weight
  int batch_size = 4;
  int iterations = 1;
  double anchor_sigma = 0.05;
  double learning_rate = 1e-3;
  double d_lr_scale = 0.5;      // discriminator learning rate multiplier
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.99;
  int dist_batch = 4;           // N+1 latents per distance-consistency batch
  double d_input_noise = 0.1;   // instance-noise std on discriminator inputs
  uint64_t seed = 0;
  int eval_every = 0;           // sample-grid cadence; 0 = never
  int checkpoint_every = 0;     // 0 = final checkpoint only
  bool literal_eq1 = false;     // linear adversarial form instead of softplus
  RealismMode realism_mode = RealismMode::anchor_relaxed;

  void validate() const;
};

// Toy source-model pretraining: a plain image-head GAN.
struct PretrainConfig {
  int image_size = 32;
  int latent_dim = 16;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double d_lr_scale = 0.5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.99;
  double d_input_noise = 0.1;
  uint64_t seed = 0;
  int eval_every = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdaptationConfig& c);
void from_json(const nlohmann::json& j, AdaptationConfig& c);
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

}  // namespace fsga
