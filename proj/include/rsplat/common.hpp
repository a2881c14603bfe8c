#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Violated precondition on an API call (shape or dimension mismatch).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user configuration (bad key, out-of-range value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system or decoding failure; message carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered during optimization.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, long iter) : std::runtime_error(what), iter_(iter) {}
  long iter() const { return iter_; }

 private:
  long iter_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

/// Dense interleaved H x W x C image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double* pixel(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * channels]; }
  const double* pixel(int x, int y) const {
    return &data[(static_cast<std::size_t>(y) * width + x) * channels];
  }
};

/// Axis-aligned pixel rectangle [x0, x1) x [y0, y1).
struct Region {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static Region full(int w, int h) { return {0, 0, w, h}; }
  static Region left_half(int w, int h) { return {0, 0, w / 2, h}; }
  static Region right_half(int w, int h) { return {w / 2, 0, w, h}; }
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

/// Box-average downsample by an integer factor (trailing partial blocks averaged over what exists).
Image downsample(const Image& img, int factor);
/// Copy of the pixels inside `r`.
Image crop(const Image& img, const Region& r);
/// Single channel image holding the mean over channels.
Image channel_mean(const Image& img);

/// Worker count for intra-iteration parallelism; `RSPLAT_THREADS` overrides the hardware default.
int thread_count();
/// Runs fn(i) for i in [0, n) over a static partition. Callers must make fn(i) independent of the
/// partition for results to be thread-count invariant.
void parallel_for(int n, const std::function<void(int)>& fn);

/// Version string baked in at configure time (git-describe style).
const char* version_string();

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace rsplat
