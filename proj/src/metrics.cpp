#include "fsga/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fsga/errors.hpp"
#include "fsga/graph.hpp"
#include "fsga/nn.hpp"
#include "fsga/rng.hpp"

namespace fsga {

namespace {

constexpr float kLeaky = 0.2f;
constexpr double kNormEps = 1e-10;

Tensor conv_forward(const Tensor& x, const FeatureExtractor::ConvLayer& layer) {
  Graph g;
  Value out = g.conv2d(g.input(x), g.input(layer.weight), g.input(layer.bias),
                       layer.stride, layer.pad);
  out = g.leaky_relu(out, kLeaky);
  return g.val(out);
}

// Unit-normalize the channel vector at every spatial location.
Tensor channel_normalize(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(x.shape());
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const float* src = x.data() + static_cast<int64_t>(i) * c * plane;
    float* dst = out.data() + static_cast<int64_t>(i) * c * plane;
    for (int64_t p = 0; p < plane; ++p) {
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double v = src[ch * plane + p];
        s += v * v;
      }
      const double inv = 1.0 / std::sqrt(s + kNormEps);
      for (int ch = 0; ch < c; ++ch)
        dst[ch * plane + p] = static_cast<float>(src[ch * plane + p] * inv);
    }
  }
  return out;
}

}  // namespace

FeatureExtractor FeatureExtractor::pixel() {
  FeatureExtractor fx;
  fx.kind_ = ExtractorKind::pixel;
  fx.normalize_ = false;
  return fx;
}

FeatureExtractor FeatureExtractor::fixed_random_conv(int in_channels, int image_size,
                                                     uint64_t seed) {
  if (image_size < 8) throw std::invalid_argument("fixed_random_conv: image_size too small");
  FeatureExtractor fx;
  fx.kind_ = ExtractorKind::fixed_random_conv;
  fx.normalize_ = true;
  Rng rng = Rng::derive(seed, "feature-extractor", 0);
  const std::vector<int> channels = {16, 32, 48};
  int ch = in_channels;
  for (int out_ch : channels) {
    ConvLayer layer;
    layer.weight = Tensor({out_ch, ch, 3, 3});
    layer.bias = Tensor({out_ch});
    init_normal(layer.weight, he_std(ch * 9), rng);
    fx.layers_.push_back(std::move(layer));
    ch = out_ch;
  }
  return fx;
}

FeatureExtractor FeatureExtractor::external_perceptual(const std::string& weights_path) {
  std::ifstream in(weights_path, std::ios::binary);
  if (!in) throw IoError("external_perceptual: cannot open " + weights_path);
  FeatureExtractor fx;
  fx.kind_ = ExtractorKind::external_perceptual;
  fx.normalize_ = true;
  // Format: u32 layer count, then per layer u32 {out,in,k,stride,pad}
  // followed by out*in*k*k weight floats and out bias floats.
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count == 0 || count > 64)
    throw IoError("external_perceptual: bad layer count in " + weights_path);
  for (uint32_t l = 0; l < count; ++l) {
    uint32_t dims[5];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw IoError("external_perceptual: truncated header");
    ConvLayer layer;
    layer.weight = Tensor({static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                           static_cast<int>(dims[2]), static_cast<int>(dims[2])});
    layer.bias = Tensor({static_cast<int>(dims[0])});
    layer.stride = static_cast<int>(dims[3]);
    layer.pad = static_cast<int>(dims[4]);
    in.read(reinterpret_cast<char*>(layer.weight.data()),
            static_cast<std::streamsize>(layer.weight.numel() * sizeof(float)));
    in.read(reinterpret_cast<char*>(layer.bias.data()),
            static_cast<std::streamsize>(layer.bias.numel() * sizeof(float)));
    if (!in) throw IoError("external_perceptual: truncated weights");
    fx.layers_.push_back(std::move(layer));
  }
  return fx;
}

std::vector<Tensor> FeatureExtractor::layer_features(const Tensor& images) const {
  if (images.rank() != 4) throw std::invalid_argument("layer_features: expects NCHW");
  std::vector<Tensor> feats;
  if (kind_ == ExtractorKind::pixel) {
    const int n = images.dim(0);
    feats.push_back(images.reshaped({n, static_cast<int>(images.numel() / n)}));
    return feats;
  }
  Tensor h = images;
  for (const ConvLayer& layer : layers_) {
    h = conv_forward(h, layer);
    Tensor f = normalize_ ? channel_normalize(h) : h;
    const int n = f.dim(0);
    feats.push_back(f.reshaped({n, static_cast<int>(f.numel() / n)}));
  }
  return feats;
}

Tensor FeatureExtractor::embed(const Tensor& images) const {
  if (images.rank() != 4) throw std::invalid_argument("embed: expects NCHW");
  const int n = images.dim(0);
  if (kind_ == ExtractorKind::pixel)
    return images.reshaped({n, static_cast<int>(images.numel() / n)});
  // Per-channel spatial means of every layer, each layer's pooled vector
  // unit-normalized, concatenated.
  std::vector<std::vector<float>> rows(static_cast<size_t>(n));
  Tensor h = images;
  for (const ConvLayer& layer : layers_) {
    h = conv_forward(h, layer);
    const int c = h.dim(1);
    const int64_t plane = static_cast<int64_t>(h.dim(2)) * h.dim(3);
    for (int i = 0; i < n; ++i) {
      std::vector<double> pooled(static_cast<size_t>(c));
      const float* base = h.data() + static_cast<int64_t>(i) * c * plane;
      double norm = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t p = 0; p < plane; ++p) s += base[ch * plane + p];
        pooled[static_cast<size_t>(ch)] = s / static_cast<double>(plane);
        norm += pooled[static_cast<size_t>(ch)] * pooled[static_cast<size_t>(ch)];
      }
      const double inv = 1.0 / std::sqrt(norm + kNormEps);
      for (int ch = 0; ch < c; ++ch)
        rows[static_cast<size_t>(i)].push_back(static_cast<float>(pooled[static_cast<size_t>(ch)] * inv));
    }
  }
  const int d = static_cast<int>(rows[0].size());
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    std::copy(rows[static_cast<size_t>(i)].begin(), rows[static_cast<size_t>(i)].end(),
              out.data() + static_cast<int64_t>(i) * d);
  return out;
}

double FeatureExtractor::cached_distance(const std::vector<Tensor>& a, int i,
                                         const std::vector<Tensor>& b, int j) {
  double total = 0.0;
  for (size_t l = 0; l < a.size(); ++l) {
    const int fa = a[l].dim(1);
    const float* ra = a[l].data() + static_cast<int64_t>(i) * fa;
    const float* rb = b[l].data() + static_cast<int64_t>(j) * fa;
    double s = 0.0;
    for (int t = 0; t < fa; ++t) {
      const double d = static_cast<double>(ra[t]) - rb[t];
      s += d * d;
    }
    total += s / fa;
  }
  return total / static_cast<double>(a.size());
}

double perceptual_distance(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  if (!a.same_shape(b))
    throw std::invalid_argument("perceptual_distance: image shapes differ");
  if (a.rank() != 3) throw std::invalid_argument("perceptual_distance: expects (C,H,W)");
  const Tensor ab = a.reshaped({1, a.dim(0), a.dim(1), a.dim(2)});
  const Tensor bb = b.reshaped({1, b.dim(0), b.dim(1), b.dim(2)});
  const auto fa = fx.layer_features(ab);
  const auto fb = fx.layer_features(bb);
  return FeatureExtractor::cached_distance(fa, 0, fb, 0);
}

DiversityResult intra_cluster_diversity(const Tensor& generated, const Tensor& training,
                                        const FeatureExtractor& fx) {
  if (generated.rank() != 4 || training.rank() != 4)
    throw std::invalid_argument("intra_cluster_diversity: expects NCHW batches");
  const int m = generated.dim(0), k = training.dim(0);
  if (m < 1 || k < 1) throw std::invalid_argument("intra_cluster_diversity: empty inputs");

  const auto fg = fx.layer_features(generated);
  const auto ft = fx.layer_features(training);

  DiversityResult res;
  res.assignment.assignments.resize(static_cast<size_t>(m));
  res.assignment.distances.resize(static_cast<size_t>(m));
  std::vector<std::vector<int>> members(static_cast<size_t>(k));
  for (int i = 0; i < m; ++i) {
    int best = 0;
    double best_d = FeatureExtractor::cached_distance(fg, i, ft, 0);
    for (int j = 1; j < k; ++j) {
      const double d = FeatureExtractor::cached_distance(fg, i, ft, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    res.assignment.assignments[static_cast<size_t>(i)] = best;
    res.assignment.distances[static_cast<size_t>(i)] = best_d;
    members[static_cast<size_t>(best)].push_back(i);
  }

  res.per_cluster.assign(static_cast<size_t>(k), 0.0);
  res.cluster_sizes.assign(static_cast<size_t>(k), 0);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    const auto& idx = members[static_cast<size_t>(c)];
    res.cluster_sizes[static_cast<size_t>(c)] = static_cast<int>(idx.size());
    if (idx.size() < 2) {
      ++res.excluded_clusters;
      continue;
    }
    // Unordered distinct pairs i < j.
    double s = 0.0;
    int64_t pairs = 0;
    for (size_t i = 0; i < idx.size(); ++i)
      for (size_t j = i + 1; j < idx.size(); ++j) {
        s += FeatureExtractor::cached_distance(fg, idx[i], fg, idx[j]);
        ++pairs;
      }
    res.per_cluster[static_cast<size_t>(c)] = s / static_cast<double>(pairs);
    sum += res.per_cluster[static_cast<size_t>(c)];
    ++counted;
  }
  res.score = counted > 0 ? sum / counted : 0.0;
  return res;
}

DensityCoverage density_coverage(const Tensor& real_feats, const Tensor& fake_feats,
                                 int nn_count) {
  if (real_feats.rank() != 2 || fake_feats.rank() != 2 ||
      real_feats.dim(1) != fake_feats.dim(1))
    throw std::invalid_argument("density_coverage: expects (n,d) feature matrices");
  const int n = real_feats.dim(0), m = fake_feats.dim(0), d = real_feats.dim(1);
  if (n < 2) throw std::invalid_argument("density_coverage: need at least 2 real samples");
  if (m < 1) throw std::invalid_argument("density_coverage: need at least 1 fake sample");
  if (nn_count < 1 || nn_count > n - 1)
    throw std::invalid_argument("density_coverage: nn_count out of range");

  auto dist = [&](const float* a, const float* b) {
    double s = 0.0;
    for (int t = 0; t < d; ++t) {
      const double v = static_cast<double>(a[t]) - b[t];
      s += v * v;
    }
    return std::sqrt(s);
  };

  // Radius of each real ball: distance to the nn_count-th nearest other real.
  std::vector<double> radius(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> ds;
    ds.reserve(static_cast<size_t>(n) - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      ds.push_back(dist(real_feats.data() + static_cast<int64_t>(i) * d,
                        real_feats.data() + static_cast<int64_t>(j) * d));
    }
    std::nth_element(ds.begin(), ds.begin() + (nn_count - 1), ds.end());
    radius[static_cast<size_t>(i)] = ds[static_cast<size_t>(nn_count - 1)];
  }

  int64_t contain_count = 0;
  std::vector<bool> covered(static_cast<size_t>(n), false);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      const double dd = dist(fake_feats.data() + static_cast<int64_t>(j) * d,
                             real_feats.data() + static_cast<int64_t>(i) * d);
      if (dd <= radius[static_cast<size_t>(i)]) {
        ++contain_count;
        covered[static_cast<size_t>(i)] = true;
      }
    }
  }
  DensityCoverage out;
  out.density = static_cast<double>(contain_count) / (static_cast<double>(nn_count) * m);
  int cov = 0;
  for (bool c : covered) cov += c ? 1 : 0;
  out.coverage = static_cast<double>(cov) / n;
  return out;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = t[static_cast<int64_t>(r) * cols + c];
  return m;
}

// Symmetric PSD square root; tolerates slightly negative eigenvalues.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigensolver failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8 * scale)
      throw NumericError(std::string(what) + ": matrix is not PSD within tolerance");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Tensor& mean_a, const Tensor& cov_a, const Tensor& mean_b,
                        const Tensor& cov_b) {
  const int d = static_cast<int>(mean_a.numel());
  if (mean_b.numel() != d || cov_a.numel() != static_cast<int64_t>(d) * d ||
      cov_b.numel() != static_cast<int64_t>(d) * d)
    throw std::invalid_argument("frechet_distance: dimension mismatch");

  Eigen::MatrixXd ca = to_eigen(cov_a, d, d);
  Eigen::MatrixXd cb = to_eigen(cov_b, d, d);
  const double sym_tol = 1e-6 * std::max(1.0, std::max(ca.cwiseAbs().maxCoeff(), cb.cwiseAbs().maxCoeff()));
  if ((ca - ca.transpose()).cwiseAbs().maxCoeff() > sym_tol ||
      (cb - cb.transpose()).cwiseAbs().maxCoeff() > sym_tol)
    throw std::invalid_argument("frechet_distance: covariance not symmetric");
  ca = 0.5 * (ca + ca.transpose());
  cb = 0.5 * (cb + cb.transpose());

  double delta = 0.0;
  for (int i = 0; i < d; ++i) {
    const double v = static_cast<double>(mean_a[i]) - mean_b[i];
    delta += v * v;
  }

  const Eigen::MatrixXd sa = psd_sqrt(ca, "frechet_distance(cov_a)");
  Eigen::MatrixXd inner = sa * cb * sa;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigensolver failed");
  double tr_sqrt = 0.0;
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  for (int i = 0; i < d; ++i) {
    const double ev = es.eigenvalues()(i);
    if (ev < -1e-8 * scale) throw NumericError("frechet_distance: sqrt argument not PSD");
    tr_sqrt += std::sqrt(std::max(ev, 0.0));
  }
  const double result = delta + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  return std::max(result, 0.0);
}

std::pair<Tensor, Tensor> feature_moments(const Tensor& feats) {
  if (feats.rank() != 2 || feats.dim(0) < 2)
    throw std::invalid_argument("feature_moments: need at least 2 rows");
  const int n = feats.dim(0), d = feats.dim(1);
  Tensor mean({d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mean[j] += feats[static_cast<int64_t>(i) * d + j];
  for (int j = 0; j < d; ++j) mean[j] /= static_cast<float>(n);
  Tensor cov({d, d});
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd row(d);
    for (int j = 0; j < d; ++j)
      row(j) = static_cast<double>(feats[static_cast<int64_t>(i) * d + j]) - mean[j];
    c.noalias() += row * row.transpose();
  }
  c /= static_cast<double>(n - 1);
  for (int r = 0; r < d; ++r)
    for (int cc = 0; cc < d; ++cc) cov[static_cast<int64_t>(r) * d + cc] = static_cast<float>(c(r, cc));
  return {std::move(mean), std::move(cov)};
}

}  // namespace fsga
