#pragma once

#include "rsplat/common.hpp"

#include <iosfwd>
#include <limits>
#include <optional>

namespace rsplat {

/// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Per-pixel, per-channel SSIM. Windows falling off the image are cropped and renormalized.
Image ssim_map(const Image& a, const Image& b, const SsimParams& p = {});

/// Adds dL/da given dL/d(ssim_map) (same shape as the map) into `d_a`.
void ssim_map_backward(const Image& a, const Image& b, const Image& d_map, Image& d_a, const SsimParams& p = {});

/// 10 log10(1 / MSE) over `region`; +inf for identical inputs.
double psnr(const Image& a, const Image& b, const Region& region);
double psnr(const Image& a, const Image& b);

/// Mean SSIM over `region`, computed on the region crop so pixels outside never participate.
double ssim(const Image& a, const Image& b, const Region& region, const SsimParams& p = {});
double ssim(const Image& a, const Image& b, const SsimParams& p = {});

/// (1 - ssim) / 2.
inline double dssim(const Image& a, const Image& b, const SsimParams& p = {}) { return 0.5 * (1.0 - ssim(a, b, p)); }

constexpr double kPsnrCsvCap = 99.0;
inline double psnr_for_csv(double v) { return std::min(v, kPsnrCsvCap); }

struct MaskIou {
  double iou_static = 0;
  double iou_transient = 0;
  bool transient_defined = true;  // false when the oracle has no transient pixels
};

/// Binarizes `pred` at 0.5 (>= 0.5 is static) and compares with `oracle` (>= 0.5 is static).
MaskIou mask_iou(const Image& pred, const Image& oracle);
/// Fraction of pixels predicted static.
double static_fraction(const Image& pred);

struct ViewMetrics {
  long iter = 0;
  int view_id = 0;
  double psnr = 0;
  double ssim = 0;
  std::optional<double> iou_static;
  std::optional<double> iou_transient;
  std::optional<double> static_fraction;  // not written to the CSV
  std::size_t gaussian_count = 0;
};

struct EvalReport {
  std::vector<ViewMetrics> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::optional<double> mean_iou_transient;
  std::optional<double> mean_static_fraction;  // of predicted masks, when a mask model exists
  double wall_seconds = 0;

  /// Recomputes the means from `rows`.
  void finalize();
};

void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_rows(std::ostream& os, const std::vector<ViewMetrics>& rows);

}  // namespace rsplat
