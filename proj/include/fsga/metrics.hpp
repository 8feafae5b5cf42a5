#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsga/tensor.hpp"

namespace fsga {

enum class ExtractorKind { pixel, fixed_random_conv, external_perceptual };

// Fixed (never trained) feature extractor behind all perceptual metrics.
// pixel compares raw pixels; fixed_random_conv runs a seeded random conv
// stack and compares unit-normalized per-location features, LPIPS-style;
// external_perceptual is the same machinery with weights loaded from a file,
// the hook for plugging in a real perceptual network.
class FeatureExtractor {
 public:
  static FeatureExtractor pixel();
  static FeatureExtractor fixed_random_conv(int in_channels, int image_size, uint64_t seed = 17);
  static FeatureExtractor external_perceptual(const std::string& weights_path);

  ExtractorKind kind() const { return kind_; }
  bool normalized() const { return normalize_; }

  // Full per-layer feature maps for a batch (each entry N x C_l*H_l*W_l,
  // unit-normalized across channels at each location when normalize_).
  std::vector<Tensor> layer_features(const Tensor& images) const;

  // Compact per-image embedding (N x D): channel-pooled layer activations.
  // Distribution metrics (density/coverage, Frechet) run on these.
  Tensor embed(const Tensor& images) const;

  // Mean over layers of the mean squared feature difference, from
  // layer_features of two cached batches.
  static double cached_distance(const std::vector<Tensor>& a, int i,
                                const std::vector<Tensor>& b, int j);

  struct ConvLayer {
    Tensor weight;  // (O, C, k, k)
    Tensor bias;    // (O)
    int stride = 2;
    int pad = 1;
  };

 private:
  ExtractorKind kind_ = ExtractorKind::pixel;
  bool normalize_ = false;
  std::vector<ConvLayer> layers_;
};

// Symmetric nonnegative perceptual distance between two images (C,H,W).
double perceptual_distance(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);

// Nearest-training-image assignment of generated samples.
struct ClusterAssignment {
  std::vector<int> assignments;    // generated index -> training index
  std::vector<double> distances;   // matching distances
};

struct DiversityResult {
  double score = 0.0;                  // mean over clusters with >= 2 members
  std::vector<double> per_cluster;     // k entries; excluded clusters hold 0
  std::vector<int> cluster_sizes;      // k entries
  int excluded_clusters = 0;           // clusters with < 2 members
  ClusterAssignment assignment;
};

// Average pairwise distance within members of the same nearest-training
// cluster, averaged over clusters. Zero for a generator that reproduces the
// training images exactly.
DiversityResult intra_cluster_diversity(const Tensor& generated, const Tensor& training,
                                        const FeatureExtractor& fx);

struct DensityCoverage {
  double density = 0.0;   // unbounded
  double coverage = 0.0;  // in [0, 1]
};

// Neighbourhood-ball metrics: each real sample's ball radius is the distance
// to its nn_count-th nearest other real sample. Density counts, per fake,
// how many real balls contain it (normalized by nn_count); coverage is the
// fraction of reals whose ball contains at least one fake.
DensityCoverage density_coverage(const Tensor& real_feats, const Tensor& fake_feats,
                                 int nn_count = 1);

// Frechet distance between two Gaussians: |mu_a - mu_b|^2 +
// tr(C_a + C_b - 2 (C_a C_b)^{1/2}), via symmetrized matrix square roots.
double frechet_distance(const Tensor& mean_a, const Tensor& cov_a, const Tensor& mean_b,
                        const Tensor& cov_b);

// Mean and unbiased covariance of row features (n x d), n >= 2.
std::pair<Tensor, Tensor> feature_moments(const Tensor& feats);

}  // namespace fsga
