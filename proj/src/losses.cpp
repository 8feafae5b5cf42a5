#include "fsga/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "fsga/errors.hpp"
#include "fsga/simkl.hpp"

namespace fsga {

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Adapted layers must cover the same names and batch size as the source.
const Tensor& matching_layer(const ActivationStack& stack, const std::string& name) {
  const Tensor* t = stack.find(name);
  if (!t) throw std::invalid_argument("distance_consistency: layer set mismatch at " + name);
  return *t;
}

}  // namespace

SimilarityDistribution similarity_distribution(const ActivationStack& acts,
                                               const std::string& layer, int index) {
  const Tensor* t = acts.find(layer);
  if (!t) throw std::invalid_argument("similarity_distribution: unknown layer " + layer);
  const int n = t->dim(0);
  if (n < 2) throw std::invalid_argument("similarity_distribution: batch size must be >= 2");
  if (index < 0 || index >= n)
    throw std::invalid_argument("similarity_distribution: index out of range");
  const int f = static_cast<int>(t->numel() / n);
  const auto sims = detail::row_cosine_matrix(t->data(), n, f);
  const auto probs = detail::offdiag_softmax(sims, n);
  SimilarityDistribution out;
  out.layer = layer;
  out.index = index;
  out.probs.assign(probs.begin() + static_cast<int64_t>(index) * (n - 1),
                   probs.begin() + static_cast<int64_t>(index + 1) * (n - 1));
  return out;
}

std::vector<std::vector<double>> similarity_rows(const ActivationStack& acts) {
  std::vector<std::vector<double>> rows;
  for (const auto& [name, t] : acts.per_layer) {
    const int n = t.dim(0);
    if (n < 2) throw std::invalid_argument("similarity_rows: batch size must be >= 2");
    const int f = static_cast<int>(t.numel() / n);
    rows.push_back(detail::offdiag_softmax(detail::row_cosine_matrix(t.data(), n, f), n));
  }
  return rows;
}

double distance_consistency_loss(const ActivationStack& source_acts,
                                 const ActivationStack& adapted_acts) {
  if (source_acts.per_layer.size() != adapted_acts.per_layer.size())
    throw std::invalid_argument("distance_consistency: layer count mismatch");
  const int n = source_acts.batch_size();
  if (n != adapted_acts.batch_size())
    throw std::invalid_argument("distance_consistency: batch size mismatch");
  if (n < 2) throw std::invalid_argument("distance_consistency: batch size must be >= 2");
  double loss = 0.0;
  for (const auto& [name, src] : source_acts.per_layer) {
    const Tensor& ad = matching_layer(adapted_acts, name);
    if (ad.dim(0) != n) throw std::invalid_argument("distance_consistency: batch size mismatch");
    const int f = static_cast<int>(src.numel() / n);
    if (ad.numel() != src.numel())
      throw std::invalid_argument("distance_consistency: feature size mismatch at " + name);
    const auto q = detail::offdiag_softmax(detail::row_cosine_matrix(src.data(), n, f), n);
    loss += detail::dist_kl_layer(ad.data(), n, f, q, nullptr);
  }
  return loss;
}

std::vector<std::pair<std::string, Tensor>> distance_consistency_grad(
    const ActivationStack& source_acts, const ActivationStack& adapted_acts) {
  if (source_acts.per_layer.size() != adapted_acts.per_layer.size())
    throw std::invalid_argument("distance_consistency: layer count mismatch");
  const int n = source_acts.batch_size();
  std::vector<std::pair<std::string, Tensor>> grads;
  for (const auto& [name, ad] : adapted_acts.per_layer) {
    const Tensor& src = matching_layer(source_acts, name);
    const int f = static_cast<int>(src.numel() / n);
    const auto q = detail::offdiag_softmax(detail::row_cosine_matrix(src.data(), n, f), n);
    std::vector<double> d(static_cast<size_t>(n) * f, 0.0);
    detail::dist_kl_layer(ad.data(), n, f, q, d.data());
    Tensor g(ad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = static_cast<float>(d[static_cast<size_t>(i)]);
    grads.emplace_back(name, std::move(g));
  }
  return grads;
}

double adversarial_d_loss(const std::vector<double>& real_logits,
                          const std::vector<double>& fake_logits) {
  if (real_logits.empty() || fake_logits.empty())
    throw std::invalid_argument("adversarial_d_loss: empty logits");
  double lr = 0.0, lf = 0.0;
  for (double r : real_logits) lr += softplus(-r);
  for (double f : fake_logits) lf += softplus(f);
  return lr / static_cast<double>(real_logits.size()) + lf / static_cast<double>(fake_logits.size());
}

double adversarial_g_loss(const std::vector<double>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("adversarial_g_loss: empty logits");
  double s = 0.0;
  for (double f : fake_logits) s += softplus(-f);
  return s / static_cast<double>(fake_logits.size());
}

double adversarial_d_loss_linear(const std::vector<double>& real_logits,
                                 const std::vector<double>& fake_logits) {
  if (real_logits.empty() || fake_logits.empty())
    throw std::invalid_argument("adversarial_d_loss_linear: empty logits");
  return mean(real_logits) - mean(fake_logits);
}

double adversarial_g_loss_linear(const std::vector<double>& fake_logits) {
  if (fake_logits.empty()) throw std::invalid_argument("adversarial_g_loss_linear: empty logits");
  return mean(fake_logits);
}

LossReport total_generator_loss(double adv_image, double adv_patch, double dist, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("total_generator_loss: lambda must be >= 0");
  LossReport r;
  r.adv_image = adv_image;
  r.adv_patch = adv_patch;
  r.dist = dist;
  r.lambda = lambda;
  r.total = adv_image + adv_patch + lambda * dist;
  return r;
}

HeadLogits head_logits(const DiscriminatorHandle& disc, const Tensor& images) {
  Graph g;
  auto fwd = disc.forward(g, g.input(images), false);
  const Tensor& img = g.val(fwd.image_logits);
  const int n = img.dim(0);
  HeadLogits out;
  out.image.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.image[static_cast<size_t>(i)] = img[i];
  if (!fwd.patch_maps.empty()) {
    out.patch_mean.assign(static_cast<size_t>(n), 0.0);
    for (auto& [name, v] : fwd.patch_maps) {
      const Tensor& m = g.val(v);
      const int64_t cells = m.numel() / n;
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        const float* row = m.data() + i * cells;
        for (int64_t c = 0; c < cells; ++c) s += row[c];
        out.patch_mean[static_cast<size_t>(i)] += s / static_cast<double>(cells);
      }
    }
    for (double& v : out.patch_mean) v /= static_cast<double>(fwd.patch_maps.size());
  }
  return out;
}

std::pair<RelaxedLossParts, RelaxedLossParts> relaxed_adversarial_losses(
    const GeneratorHandle& gen, const DiscriminatorHandle& disc, const AnchorSet& anchors,
    const Tensor& target_batch, Rng& rng, bool literal_eq1) {
  if (target_batch.rank() != 4 || target_batch.dim(0) < 1)
    throw std::invalid_argument("relaxed_adversarial_losses: empty target batch");
  const int n = target_batch.dim(0);
  const LatentSpec spec = gen.latent_spec();

  NoiseBatch z_anchor = sample_anchor(anchors, n, rng);
  NoiseBatch z_prior = sample_prior(spec, n, rng);  // full prior per the patch-term footnote
  const Tensor fake_img = generate(gen, z_anchor, false).first;
  const Tensor fake_patch = generate(gen, z_prior, false).first;

  const HeadLogits real = head_logits(disc, target_batch);
  const HeadLogits fimg = head_logits(disc, fake_img);
  const HeadLogits fpatch = head_logits(disc, fake_patch);

  RelaxedLossParts gparts, dparts;
  const bool has_patch = !real.patch_mean.empty();
  if (literal_eq1) {
    gparts.image_term = adversarial_g_loss_linear(fimg.image);
    dparts.image_term = adversarial_d_loss_linear(real.image, fimg.image);
    if (has_patch) {
      gparts.patch_term = adversarial_g_loss_linear(fpatch.patch_mean);
      dparts.patch_term = adversarial_d_loss_linear(real.patch_mean, fpatch.patch_mean);
    }
  } else {
    gparts.image_term = adversarial_g_loss(fimg.image);
    dparts.image_term = adversarial_d_loss(real.image, fimg.image);
    if (has_patch) {
      gparts.patch_term = adversarial_g_loss(fpatch.patch_mean);
      dparts.patch_term = adversarial_d_loss(real.patch_mean, fpatch.patch_mean);
    }
  }
  return {gparts, dparts};
}

}  // namespace fsga
