#pragma once

#include "rsplat/common.hpp"

#include <filesystem>

namespace rsplat {

/// Hf x Wf grid of C-dimensional patch descriptors.
struct FeatureMap {
  int grid_w = 0;
  int grid_h = 0;
  int channels = 0;
  int patch_size = 0;
  int source_w = 0;
  int source_h = 0;
  std::vector<double> data;  // row-major, (y * grid_w + x) * channels + c

  const double* cell(int x, int y) const { return &data[(static_cast<std::size_t>(y) * grid_w + x) * channels]; }
  double* cell(int x, int y) { return &data[(static_cast<std::size_t>(y) * grid_w + x) * channels]; }
  std::size_t cell_count() const { return static_cast<std::size_t>(grid_w) * grid_h; }
  bool same_grid(const FeatureMap& o) const {
    return grid_w == o.grid_w && grid_h == o.grid_h && channels == o.channels;
  }
};

/// Turns an image into a feature grid. Implementations must be deterministic.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureMap extract(const Image& rgb) const = 0;
  virtual int channels() const = 0;
};

/// Hand-built patch descriptor: for two blur scales, patch mean RGB (centered at 0.5), RGB standard
/// deviation and mean gradient magnitude per channel. 18 channels.
class PatchDescriptorExtractor final : public FeatureExtractor {
 public:
  explicit PatchDescriptorExtractor(int patch_size = 4, double coarse_sigma = 1.0)
      : patch_size_(patch_size), coarse_sigma_(coarse_sigma) {}
  FeatureMap extract(const Image& rgb) const override;
  int channels() const override { return 18; }
  int patch_size() const { return patch_size_; }

 private:
  int patch_size_;
  double coarse_sigma_;
};

/// Separable Gaussian blur with renormalized borders; sigma <= 0 returns the input.
Image gaussian_blur(const Image& img, double sigma);

/// Cosine similarity of each cell pair; zero-norm cells give 0.
std::vector<double> cosine_similarity(const FeatureMap& a, const FeatureMap& b);

/// `.splf` container: "SPLF", u32 version, u32 Hf, u32 Wf, u32 C, u32 patch, then Hf*Wf*C float32,
/// all little-endian.
inline constexpr std::uint32_t kSplfVersion = 1;
void save_splf(const std::filesystem::path& path, const FeatureMap& f);
FeatureMap load_splf(const std::filesystem::path& path);

}  // namespace rsplat
