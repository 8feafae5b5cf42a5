#include "fsga/latent.hpp"

#include <stdexcept>

namespace fsga {

AnchorSet::AnchorSet(Tensor base_points, double sigma, uint64_t seed)
    : base_points_(std::move(base_points)), sigma_(sigma), seed_(seed) {
  if (base_points_.rank() != 2 || base_points_.dim(0) < 1)
    throw std::invalid_argument("AnchorSet: need at least one base point");
  if (sigma_ < 0.0) throw std::invalid_argument("AnchorSet: sigma must be nonnegative");
}

AnchorSet create_anchor_set(const LatentSpec& spec, int k, uint64_t seed, double sigma) {
  if (k < 1) throw std::invalid_argument("create_anchor_set: k must be >= 1");
  if (spec.dim < 1) throw std::invalid_argument("create_anchor_set: dim must be >= 1");
  Rng rng = Rng::derive(seed, "anchor-base-points", 0);
  Tensor base({k, spec.dim});
  for (int64_t i = 0; i < base.numel(); ++i) base[i] = rng.normal_f();
  return AnchorSet(std::move(base), sigma, seed);
}

NoiseBatch sample_prior(const LatentSpec& spec, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  NoiseBatch batch;
  batch.vectors = Tensor({n, spec.dim});
  for (int64_t i = 0; i < batch.vectors.numel(); ++i) batch.vectors[i] = rng.normal_f();
  batch.origin = NoiseOrigin::prior;
  return batch;
}

NoiseBatch sample_anchor(const AnchorSet& anchors, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_anchor: n must be >= 1");
  const int dim = anchors.dim();
  const float sigma = static_cast<float>(anchors.sigma());
  NoiseBatch batch;
  batch.vectors = Tensor({n, dim});
  for (int i = 0; i < n; ++i) {
    const int b = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(anchors.k())));
    const float* base = anchors.base_points().data() + static_cast<int64_t>(b) * dim;
    float* out = batch.vectors.data() + static_cast<int64_t>(i) * dim;
    for (int d = 0; d < dim; ++d) out[d] = base[d] + sigma * rng.normal_f();
  }
  batch.origin = NoiseOrigin::anchor;
  return batch;
}

}  // namespace fsga
