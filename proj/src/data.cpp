#include "fsga/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>

#include "fsga/errors.hpp"

namespace fsga {

namespace fs = std::filesystem;

void FewShotDataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("FewShotDataset: images must be NCHW");
  const int n = images.dim(0);
  if (n < 1 || n > 1000)
    throw std::invalid_argument("FewShotDataset: k must be in [1, 1000], got " + std::to_string(n));
  for (int64_t i = 0; i < images.numel(); ++i) {
    const float v = images[i];
    if (!(v >= -1.0f && v <= 1.0f))
      throw std::invalid_argument("FewShotDataset: pixel values must lie in [-1, 1]");
  }
}

namespace {

bool has_raster_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm" ||
         ext == ".pgm" || ext == ".tif" || ext == ".tiff" || ext == ".webp";
}

// BGR u8 mat -> CHW float in [-1, 1], center-cropped square, resized.
void mat_to_chw(const cv::Mat& bgr, int image_size, float* dst) {
  const int side = std::min(bgr.rows, bgr.cols);
  const int y0 = (bgr.rows - side) / 2;
  const int x0 = (bgr.cols - side) / 2;
  cv::Mat crop = bgr(cv::Rect(x0, y0, side, side));
  cv::Mat resized;
  if (side == image_size)
    resized = crop;
  else
    cv::resize(crop, resized, cv::Size(image_size, image_size), 0, 0, cv::INTER_AREA);
  const int64_t plane = static_cast<int64_t>(image_size) * image_size;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const cv::Vec3b px = resized.at<cv::Vec3b>(y, x);
      const int64_t off = static_cast<int64_t>(y) * image_size + x;
      dst[0 * plane + off] = static_cast<float>(px[2]) / 127.5f - 1.0f;  // R
      dst[1 * plane + off] = static_cast<float>(px[1]) / 127.5f - 1.0f;  // G
      dst[2 * plane + off] = static_cast<float>(px[0]) / 127.5f - 1.0f;  // B
    }
  }
}

}  // namespace

FewShotDataset load_image_dir(const std::string& path, int image_size, int limit,
                              uint64_t seed) {
  if (image_size < 1) throw std::invalid_argument("load_image_dir: image_size must be >= 1");
  if (limit < 1) throw std::invalid_argument("load_image_dir: limit must be >= 1");
  if (!fs::is_directory(path)) throw IoError("load_image_dir: not a directory: " + path);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(path))
    if (entry.is_regular_file() && has_raster_extension(entry.path()))
      files.push_back(entry.path().string());
  if (files.empty()) throw IoError("load_image_dir: no raster images in " + path);
  std::sort(files.begin(), files.end());

  // Seeded Fisher-Yates, then take the first `limit` decodable files.
  Rng rng = Rng::derive(seed, "dataset-shuffle", 0);
  for (size_t i = files.size(); i > 1; --i)
    std::swap(files[i - 1], files[rng.uniform_index(i)]);

  std::vector<cv::Mat> mats;
  std::vector<std::string> used;
  for (const std::string& f : files) {
    if (static_cast<int>(mats.size()) >= limit) break;
    cv::Mat m = cv::imread(f, cv::IMREAD_COLOR);
    if (m.empty()) {
      std::cerr << "load_image_dir: skipping undecodable file " << f << "\n";
      continue;
    }
    mats.push_back(std::move(m));
    used.push_back(f);
  }
  if (mats.empty()) throw IoError("load_image_dir: no decodable images in " + path);
  if (static_cast<int>(mats.size()) < limit && static_cast<int>(files.size()) >= limit)
    std::cerr << "load_image_dir: only " << mats.size() << " of requested " << limit
              << " images decodable in " << path << "\n";
  if (static_cast<int>(files.size()) < limit)
    std::cerr << "load_image_dir: directory holds " << files.size() << " images, requested "
              << limit << "; using all of them\n";

  FewShotDataset ds;
  const int k = static_cast<int>(mats.size());
  ds.images = Tensor({k, 3, image_size, image_size});
  for (int i = 0; i < k; ++i)
    mat_to_chw(mats[static_cast<size_t>(i)], image_size,
               ds.images.data() + static_cast<int64_t>(i) * 3 * image_size * image_size);
  ds.provenance = std::move(used);
  ds.validate();
  return ds;
}

Tensor sample_batch(const FewShotDataset& ds, int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch_size must be >= 1");
  const int k = ds.k();
  const int64_t sample = ds.images.numel() / k;
  Tensor out({batch_size, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  for (int i = 0; i < batch_size; ++i) {
    const int64_t src = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(k)));
    std::copy(ds.images.data() + src * sample, ds.images.data() + (src + 1) * sample,
              out.data() + static_cast<int64_t>(i) * sample);
  }
  return out;
}

namespace {

cv::Mat chw_to_mat(const float* src, int c, int h, int w) {
  cv::Mat bgr(h, w, CV_8UC3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int64_t off = static_cast<int64_t>(y) * w + x;
      auto to_u8 = [&](int ch) {
        const float v = c == 3 ? src[ch * plane + off] : src[off];
        return static_cast<uint8_t>(
            std::clamp(std::lround((v + 1.0f) * 127.5f), 0L, 255L));
      };
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(to_u8(2), to_u8(1), to_u8(0));
    }
  }
  return bgr;
}

}  // namespace

void save_image(const Tensor& image, const std::string& path) {
  if (image.rank() != 3) throw std::invalid_argument("save_image: expects (C,H,W)");
  cv::Mat m = chw_to_mat(image.data(), image.dim(0), image.dim(1), image.dim(2));
  if (!cv::imwrite(path, m)) throw IoError("save_image: cannot write " + path);
}

Tensor load_image(const std::string& path, int image_size) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("load_image: cannot decode " + path);
  const int size = image_size > 0 ? image_size : std::min(m.rows, m.cols);
  Tensor out({3, size, size});
  mat_to_chw(m, size, out.data());
  return out;
}

void save_image_grid(const Tensor& images, int cols, const std::string& path) {
  if (images.rank() != 4) throw std::invalid_argument("save_image_grid: expects NCHW");
  if (cols < 1) throw std::invalid_argument("save_image_grid: cols must be >= 1");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int rows = (n + cols - 1) / cols;
  cv::Mat canvas(rows * h, cols * w, CV_8UC3, cv::Scalar(0, 0, 0));
  for (int i = 0; i < n; ++i) {
    cv::Mat tile = chw_to_mat(images.data() + static_cast<int64_t>(i) * c * h * w, c, h, w);
    tile.copyTo(canvas(cv::Rect((i % cols) * w, (i / cols) * h, w, h)));
  }
  if (!cv::imwrite(path, canvas)) throw IoError("save_image_grid: cannot write " + path);
}

}  // namespace fsga
