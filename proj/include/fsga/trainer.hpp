#pragma once

#include <string>
#include <utility>

#include "fsga/checkpoint.hpp"
#include "fsga/data.hpp"
#include "fsga/latent.hpp"
#include "fsga/losses.hpp"
#include "fsga/models.hpp"
#include "fsga/nn.hpp"
#include "fsga/trainer_config.hpp"

namespace fsga {

// Sampler instrumentation: per adaptation run, how many noise batches each
// consumer drew.
struct SamplerCounters {
  uint64_t anchor_batches = 0;       // image head, anchor_relaxed mode
  uint64_t prior_image_batches = 0;  // image head, other modes
  uint64_t prior_patch_batches = 0;  // patch head
  uint64_t dist_batches = 0;         // distance-consistency batches
  uint64_t real_batches = 0;
};

// Mutable state of one adaptation run. The frozen source clone is
// referentially distinct from the adapted generator from step 0.
struct AdaptState {
  GeneratorHandle adapted;
  GeneratorHandle frozen_source;
  DiscriminatorHandle disc;
  AnchorSet anchors;
  AdaptationConfig config;
  Adam opt_g, opt_d;
  uint64_t step = 0;
  std::string shape_world_json;
  SamplerCounters counters;
};

struct StepReport {
  LossReport g;      // generator-side breakdown (logged)
  double d_total = 0.0;
};

// Anchor set created once with k = |target|; discriminator fine-tuned from
// the source discriminator; source generator cloned frozen.
AdaptState init_adaptation(const GeneratorHandle& source_gen,
                           const DiscriminatorHandle& source_disc,
                           const FewShotDataset& target, const AdaptationConfig& config);

AdaptState state_from_bundle(const CheckpointBundle& bundle);
CheckpointBundle bundle_from_state(const AdaptState& state);

// One discriminator update on both heads, then one generator update on the
// full objective. Noise streams are derived from (seed, purpose, state.step),
// so a reloaded run consumes identical draws.
StepReport train_step(AdaptState& state, const Tensor& real_batch);

// Full adaptation loop: iterates train_step over seeded real batches,
// appends one JSONL loss record per step, writes sample grids and
// checkpoints at the configured cadence, and returns (and writes) the final
// bundle. run_dir may be empty to disable all file output. A non-finite
// loss aborts with a diagnostic checkpoint.
CheckpointBundle adapt(const GeneratorHandle& source_gen,
                       const DiscriminatorHandle& source_disc, const FewShotDataset& target,
                       const AdaptationConfig& config, const std::string& run_dir,
                       const std::string& shape_world_json = "");

// Continues a loaded run up to config.iterations.
CheckpointBundle adapt_resume(const CheckpointBundle& bundle, const FewShotDataset& target,
                              const std::string& run_dir);

// Plain image-head GAN pretraining of the toy source model on a large or
// procedural dataset. Returns the trained handles; writes source.ckpt and a
// loss log into run_dir unless it is empty.
std::pair<GeneratorHandle, DiscriminatorHandle> pretrain_source(
    const Tensor& images, const PretrainConfig& config, int steps, const std::string& run_dir,
    const std::string& shape_world_json = "");

}  // namespace fsga
