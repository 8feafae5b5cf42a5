#include "fsga/simkl.hpp"

#include <algorithm>
#include <cmath>

#include "fsga/errors.hpp"

namespace fsga::detail {

std::vector<double> row_cosine_matrix(const float* a, int n, int f) {
  std::vector<double> norm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const float* row = a + static_cast<int64_t>(i) * f;
    for (int j = 0; j < f; ++j) s += static_cast<double>(row[j]) * row[j];
    if (s <= 0.0) throw NumericError("zero-norm activation vector at row " + std::to_string(i));
    norm[static_cast<size_t>(i)] = std::sqrt(s);
  }
  std::vector<double> sims(static_cast<size_t>(n) * n, 1.0);
  for (int i = 0; i < n; ++i) {
    const float* ri = a + static_cast<int64_t>(i) * f;
    for (int j = i + 1; j < n; ++j) {
      const float* rj = a + static_cast<int64_t>(j) * f;
      double dot = 0.0;
      for (int t = 0; t < f; ++t) dot += static_cast<double>(ri[t]) * rj[t];
      const double c = dot / (norm[static_cast<size_t>(i)] * norm[static_cast<size_t>(j)]);
      sims[static_cast<size_t>(i) * n + j] = c;
      sims[static_cast<size_t>(j) * n + i] = c;
    }
  }
  return sims;
}

std::vector<double> offdiag_softmax(const std::vector<double>& sims, int n) {
  std::vector<double> probs(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    double mx = -2.0;  // cosines live in [-1, 1]
    for (int j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, sims[static_cast<size_t>(i) * n + j]);
    double z = 0.0;
    int c = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = std::exp(sims[static_cast<size_t>(i) * n + j] - mx);
      probs[static_cast<size_t>(i) * (n - 1) + c++] = e;
      z += e;
    }
    for (int j = 0; j < n - 1; ++j) probs[static_cast<size_t>(i) * (n - 1) + j] /= z;
  }
  return probs;
}

double dist_kl_layer(const float* acts, int n, int f,
                     const std::vector<double>& source_probs, double* dacts) {
  // Similarities go through row_cosine_matrix so that identical inputs on the
  // adapted and source side yield bitwise-identical distributions (KL is then
  // exactly zero). Norms and unit rows are kept for the gradient.
  const std::vector<double> sims = row_cosine_matrix(acts, n, f);
  std::vector<double> norm(static_cast<size_t>(n));
  std::vector<double> unit(static_cast<size_t>(n) * f);
  for (int i = 0; i < n; ++i) {
    const float* row = acts + static_cast<int64_t>(i) * f;
    double s = 0.0;
    for (int t = 0; t < f; ++t) s += static_cast<double>(row[t]) * row[t];
    if (s <= 0.0) throw NumericError("zero-norm activation vector at row " + std::to_string(i));
    const double r = std::sqrt(s);
    norm[static_cast<size_t>(i)] = r;
    for (int t = 0; t < f; ++t) unit[static_cast<size_t>(i) * f + t] = row[t] / r;
  }

  const std::vector<double> probs = offdiag_softmax(sims, n);

  double loss = 0.0;
  // grow[i*n+j]: dLoss/dsims[i][j] contribution from row i's distribution.
  std::vector<double> grow;
  if (dacts) grow.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    double kl = 0.0;
    int c = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double p = probs[static_cast<size_t>(i) * (n - 1) + c];
      const double q = source_probs[static_cast<size_t>(i) * (n - 1) + c];
      kl += p * std::log(p / q);
      ++c;
    }
    loss += kl;
    if (dacts) {
      c = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double p = probs[static_cast<size_t>(i) * (n - 1) + c];
        const double q = source_probs[static_cast<size_t>(i) * (n - 1) + c];
        grow[static_cast<size_t>(i) * n + j] = p * (std::log(p / q) - kl);
        ++c;
      }
    }
  }

  if (dacts) {
    // sims is symmetric: entry (i,j) feeds both row i's and row j's softmax.
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = grow[static_cast<size_t>(i) * n + j] + grow[static_cast<size_t>(j) * n + i];
        if (w == 0.0) continue;
        const double s = sims[static_cast<size_t>(i) * n + j];
        const double inv_r = 1.0 / norm[static_cast<size_t>(i)];
        for (int t = 0; t < f; ++t) {
          dacts[static_cast<int64_t>(i) * f + t] +=
              w * (unit[static_cast<size_t>(j) * f + t] - s * unit[static_cast<size_t>(i) * f + t]) * inv_r;
        }
      }
    }
  }
  return loss;
}

}  // namespace fsga::detail
