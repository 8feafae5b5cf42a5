#pragma once

#include <vector>

namespace fsga::detail {

// Double-precision core shared by the public loss operations and the graph's
// fused distance-consistency op, so the analytic gradient checked against
// finite differences is the one training actually uses.

// Pairwise cosine similarities between rows of a (n x f). Returns n*n
// row-major. Throws NumericError on a zero-norm row.
std::vector<double> row_cosine_matrix(const float* a, int n, int f);

// Row-wise softmax over off-diagonal entries of an n x n similarity matrix.
// Returns n x (n-1) row-major; row i holds probabilities over j != i in
// batch order.
std::vector<double> offdiag_softmax(const std::vector<double>& sims, int n);

// Sum over rows i of KL(adapted_i || source_i) where adapted_i is the
// off-diagonal softmax of cosine similarities of `acts`, and source_probs is
// n x (n-1). If dacts is non-null (size n*f), accumulates dLoss/dacts.
double dist_kl_layer(const float* acts, int n, int f,
                     const std::vector<double>& source_probs, double* dacts);

}  // namespace fsga::detail
