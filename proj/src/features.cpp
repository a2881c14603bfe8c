#include "rsplat/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rsplat {

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0) return img;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  const int w = img.width, h = img.height, ch = img.channels;
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0, z = 0;
        for (int i = std::max(-r, -x); i <= std::min(r, w - 1 - x); ++i) {
          s += k[i + r] * img.at(x + i, y, c);
          z += k[i + r];
        }
        tmp.at(x, y, c) = s / z;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0, z = 0;
        for (int i = std::max(-r, -y); i <= std::min(r, h - 1 - y); ++i) {
          s += k[i + r] * tmp.at(x, y + i, c);
          z += k[i + r];
        }
        out.at(x, y, c) = s / z;
      }
  return out;
}

namespace {

// 9 values per cell: centered mean, std, mean gradient magnitude (per rgb channel).
void describe(const Image& img, int patch, FeatureMap& f, int offset) {
  const int w = img.width, h = img.height;
  for (int gy = 0; gy < f.grid_h; ++gy)
    for (int gx = 0; gx < f.grid_w; ++gx) {
      const int x0 = gx * patch, y0 = gy * patch;
      const int x1 = std::min(w, x0 + patch), y1 = std::min(h, y0 + patch);
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      double* out = f.cell(gx, gy) + offset;
      for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0, gsum = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            const double v = img.at(x, y, c);
            s += v;
            s2 += v * v;
            const double dx = 0.5 * (img.at(std::min(x + 1, w - 1), y, c) - img.at(std::max(x - 1, 0), y, c));
            const double dy = 0.5 * (img.at(x, std::min(y + 1, h - 1), c) - img.at(x, std::max(y - 1, 0), c));
            gsum += std::sqrt(dx * dx + dy * dy);
          }
        const double mean = s / n;
        out[c] = mean - 0.5;
        out[3 + c] = std::sqrt(std::max(0.0, s2 / n - mean * mean));
        out[6 + c] = gsum / n;
      }
    }
}

}  // namespace

FeatureMap PatchDescriptorExtractor::extract(const Image& rgb) const {
  require(rgb.channels == 3, "PatchDescriptorExtractor: expected an rgb image");
  require(patch_size_ >= 1, "PatchDescriptorExtractor: patch size must be >= 1");
  FeatureMap f;
  f.patch_size = patch_size_;
  f.channels = channels();
  f.source_w = rgb.width;
  f.source_h = rgb.height;
  f.grid_w = (rgb.width + patch_size_ - 1) / patch_size_;
  f.grid_h = (rgb.height + patch_size_ - 1) / patch_size_;
  f.data.assign(f.cell_count() * f.channels, 0.0);
  describe(rgb, patch_size_, f, 0);
  describe(gaussian_blur(rgb, coarse_sigma_), patch_size_, f, 9);
  return f;
}

std::vector<double> cosine_similarity(const FeatureMap& a, const FeatureMap& b) {
  require(a.same_grid(b), "cosine_similarity: feature grids differ");
  std::vector<double> out(a.cell_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* x = &a.data[i * a.channels];
    const double* y = &b.data[i * b.channels];
    double xy = 0, xx = 0, yy = 0;
    for (int c = 0; c < a.channels; ++c) {
      xy += x[c] * y[c];
      xx += x[c] * x[c];
      yy += y[c] * y[c];
    }
    out[i] = (xx > 0 && yy > 0) ? xy / std::sqrt(xx * yy) : 0.0;
  }
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "SPLF I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError(path + ": truncated SPLF header");
  return v;
}

}  // namespace

void save_splf(const std::filesystem::path& path, const FeatureMap& f) {
  require(f.data.size() == f.cell_count() * f.channels, "save_splf: data size does not match grid");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path.string() + ": cannot open for writing");
  os.write("SPLF", 4);
  put_u32(os, kSplfVersion);
  put_u32(os, static_cast<std::uint32_t>(f.grid_h));
  put_u32(os, static_cast<std::uint32_t>(f.grid_w));
  put_u32(os, static_cast<std::uint32_t>(f.channels));
  put_u32(os, static_cast<std::uint32_t>(f.patch_size));
  std::vector<float> buf(f.data.begin(), f.data.end());
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError(path.string() + ": write failed");
}

FeatureMap load_splf(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(p + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SPLF", 4) != 0) throw IoError(p + ": bad SPLF magic");
  const std::uint32_t version = get_u32(is, p);
  if (version != kSplfVersion) throw IoError(p + ": unsupported SPLF version " + std::to_string(version));
  FeatureMap f;
  f.grid_h = static_cast<int>(get_u32(is, p));
  f.grid_w = static_cast<int>(get_u32(is, p));
  f.channels = static_cast<int>(get_u32(is, p));
  f.patch_size = static_cast<int>(get_u32(is, p));
  if (f.grid_h <= 0 || f.grid_w <= 0 || f.channels <= 0 || f.patch_size <= 0 || f.grid_h > 1 << 16 ||
      f.grid_w > 1 << 16 || f.channels > 1 << 16)
    throw IoError(p + ": implausible SPLF dimensions");
  f.source_w = f.grid_w * f.patch_size;
  f.source_h = f.grid_h * f.patch_size;
  std::vector<float> buf(f.cell_count() * f.channels);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float))))
    throw IoError(p + ": truncated SPLF payload");
  f.data.assign(buf.begin(), buf.end());
  return f;
}

}  // namespace rsplat
