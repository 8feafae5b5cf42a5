#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsga/rng.hpp"
#include "fsga/tensor.hpp"

namespace fsga {

// Small image dataset held in memory, values in [-1, 1], NCHW.
struct FewShotDataset {
  Tensor images;                         // (k, C, H, W)
  std::vector<std::string> provenance;   // source paths or synthetic tags

  int k() const { return images.rank() == 4 ? images.dim(0) : 0; }
  int channels() const { return images.dim(1); }
  int image_size() const { return images.dim(2); }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

// Deterministic subset of a directory of raster images: seeded shuffle,
// center-crop, resize to image_size, normalize to [-1, 1]. Undecodable files
// are skipped with a warning; an empty or fully undecodable directory is an
// error.
FewShotDataset load_image_dir(const std::string& path, int image_size, int limit,
                              uint64_t seed);

// One batch sampled with replacement (epochs are meaningless at k ~ 10).
Tensor sample_batch(const FewShotDataset& ds, int batch_size, Rng& rng);

// Stream view over sample_batch.
class BatchStream {
 public:
  BatchStream(const FewShotDataset& ds, int batch_size, Rng rng)
      : ds_(&ds), batch_size_(batch_size), rng_(rng) {
    if (batch_size < 1) throw std::invalid_argument("iterate_batches: batch_size must be >= 1");
  }
  Tensor next() { return sample_batch(*ds_, batch_size_, rng_); }

 private:
  const FewShotDataset* ds_;
  int batch_size_;
  Rng rng_;
};

inline BatchStream iterate_batches(const FewShotDataset& ds, int batch_size, Rng rng) {
  return BatchStream(ds, batch_size, rng);
}

// Lossless PNG emit/restore for single images (C,H,W) and tiled grids.
void save_image(const Tensor& image, const std::string& path);
Tensor load_image(const std::string& path, int image_size = 0);
void save_image_grid(const Tensor& images, int cols, const std::string& path);

}  // namespace fsga
