#pragma once

#include <cstdint>
#include <vector>

#include "fsga/rng.hpp"
#include "fsga/tensor.hpp"

namespace fsga {

// Latent prior description. The prior is a standard normal per coordinate.
struct LatentSpec {
  int dim = 16;

  bool operator==(const LatentSpec&) const = default;
};

enum class NoiseOrigin { prior, anchor };

// A batch of latent vectors plus a record of which sampler produced it; the
// relaxed adversarial objective routes on the origin.
struct NoiseBatch {
  Tensor vectors;  // (N, dim)
  NoiseOrigin origin = NoiseOrigin::prior;

  int size() const { return vectors.dim(0); }
  int dim() const { return vectors.dim(1); }
};

// k fixed latent base points plus a perturbation scale: the anchor subspace.
// Base points are immutable after creation; sampling adds N(0, sigma^2 I).
class AnchorSet {
 public:
  AnchorSet() = default;
  AnchorSet(Tensor base_points, double sigma, uint64_t seed);

  int k() const { return base_points_.dim(0); }
  int dim() const { return base_points_.dim(1); }
  double sigma() const { return sigma_; }
  uint64_t seed() const { return seed_; }
  const Tensor& base_points() const { return base_points_; }

  static constexpr double kDefaultSigma = 0.05;

 private:
  Tensor base_points_;  // (k, dim)
  double sigma_ = kDefaultSigma;
  uint64_t seed_ = 0;
};

// k i.i.d. prior draws, fixed thereafter. Pure function of (spec, k, seed).
AnchorSet create_anchor_set(const LatentSpec& spec, int k, uint64_t seed,
                            double sigma = AnchorSet::kDefaultSigma);

// n i.i.d. standard-normal vectors.
NoiseBatch sample_prior(const LatentSpec& spec, int n, Rng& rng);

// Each vector is a uniformly chosen base point plus N(0, sigma^2 I) noise.
NoiseBatch sample_anchor(const AnchorSet& anchors, int n, Rng& rng);

}  // namespace fsga
