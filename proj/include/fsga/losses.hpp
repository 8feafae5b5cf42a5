#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fsga/latent.hpp"
#include "fsga/models.hpp"
#include "fsga/rng.hpp"

namespace fsga {

// N-way probability vector over the other batch members, for one sample at
// one tap layer: the softmaxed cosine similarities.
struct SimilarityDistribution {
  std::vector<double> probs;  // over j != index, in batch order
  std::string layer;
  int index = 0;
};

// Generator-side objective breakdown for one step.
// Invariant: total = adv_image + adv_patch + lambda * dist.
struct LossReport {
  double adv_image = 0.0;
  double adv_patch = 0.0;
  double dist = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Softmax (temperature 1) over cosine similarities between sample i's
// activations and every other sample's, at the given tap layer.
SimilarityDistribution similarity_distribution(const ActivationStack& acts,
                                               const std::string& layer, int index);

// Sum over layers and instances of KL(adapted_i || source_i) between the
// similarity distributions of the two stacks. Both stacks must come from the
// same noise batch; the source side is treated as constant.
double distance_consistency_loss(const ActivationStack& source_acts,
                                 const ActivationStack& adapted_acts);

// Analytic gradient of distance_consistency_loss w.r.t. the adapted
// activations, per layer in adapted order.
std::vector<std::pair<std::string, Tensor>> distance_consistency_grad(
    const ActivationStack& source_acts, const ActivationStack& adapted_acts);

// Per-layer softmaxed similarity rows of a stack, in stack order; feeds the
// graph's fused distance-consistency op as the constant source side.
std::vector<std::vector<double>> similarity_rows(const ActivationStack& acts);

// Non-saturating adversarial losses: mean softplus(-real) + mean softplus(fake)
// for the discriminator, mean softplus(-fake) for the generator.
double adversarial_d_loss(const std::vector<double>& real_logits,
                          const std::vector<double>& fake_logits);
double adversarial_g_loss(const std::vector<double>& fake_logits);

// Literal linear form of the adversarial objective (config switch): the
// discriminator maximizes mean(fake) - mean(real), the generator minimizes
// mean(fake). High logit means "fake" under this convention.
double adversarial_d_loss_linear(const std::vector<double>& real_logits,
                                 const std::vector<double>& fake_logits);
double adversarial_g_loss_linear(const std::vector<double>& fake_logits);

LossReport total_generator_loss(double adv_image, double adv_patch, double dist, double lambda);

// One evaluation of the relaxed-realism objective, Eq.-4 routing: the image
// head sees generations from the anchor region, the patch head sees
// generations from the full prior; real images feed both heads through one
// trunk pass. Patch logits are averaged per map and across patch layers
// before entering the adversarial formula.
struct RelaxedLossParts {
  double image_term = 0.0;
  double patch_term = 0.0;
};
std::pair<RelaxedLossParts, RelaxedLossParts>  // (generator, discriminator)
relaxed_adversarial_losses(const GeneratorHandle& gen, const DiscriminatorHandle& disc,
                           const AnchorSet& anchors, const Tensor& target_batch, Rng& rng,
                           bool literal_eq1 = false);

// Image logits and layer-averaged patch logits from one trunk pass.
struct HeadLogits {
  std::vector<double> image;
  std::vector<double> patch_mean;
};
HeadLogits head_logits(const DiscriminatorHandle& disc, const Tensor& images);

}  // namespace fsga
