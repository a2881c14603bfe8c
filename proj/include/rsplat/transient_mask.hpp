#pragma once

#include "rsplat/features.hpp"
#include "rsplat/optim.hpp"

#include <span>

namespace rsplat {

/// Low-to-high supervision resolution schedule for the mask model.
struct CascadeSchedule {
  long switch_iter = 1000;     // tied to the densification start
  int low_res_factor = 2;      // render downscale in the low phase
  int residual_downsample = 4; // extra downscale applied to low-phase residuals
};

enum class CascadePhase { low, high };

/// low iff iter < switch_iter.
inline CascadePhase cascade_phase(long iter, const CascadeSchedule& c) {
  return iter < c.switch_iter ? CascadePhase::low : CascadePhase::high;
}
const char* phase_name(CascadePhase p);

/// Per-cell mask MLP output plus what is needed to differentiate it.
struct MaskForward {
  int grid_w = 0;
  int grid_h = 0;
  std::vector<double> cells;  // row-major, in (0, 1)
  SmallMlp::Tape tape;
};

/// Sigmoid-headed MLP over per-cell features; 1 = static, 0 = transient.
class MaskModel {
 public:
  MaskModel() = default;
  MaskModel(int feature_dim, int hidden, std::mt19937_64& rng);

  MaskForward forward(const FeatureMap& feat) const;
  /// Accumulates dL/d(params) given dL/d(cells).
  void backward(const MaskForward& fwd, std::span<const double> d_cells, std::span<double> d_params) const;

  SmallMlp& mlp() { return mlp_; }
  const SmallMlp& mlp() const { return mlp_; }

 private:
  SmallMlp mlp_;
};

/// Bilinear resampling of a cell grid to an image grid with cell-centered sample positions. Equal
/// sizes give the identity.
Image upsample_cells(std::span<const double> cells, int grid_w, int grid_h, int out_w, int out_h);
/// Transpose of upsample_cells.
std::vector<double> upsample_cells_backward(const Image& d_out, int grid_w, int grid_h);

/// Mask on the out_w x out_h image grid.
Image predict_mask(const MaskModel& model, const FeatureMap& feat, int out_w, int out_h);

/// max(2 cos - 1, 0) per cell.
inline double cosine_to_target(double c) { return std::max(2.0 * c - 1.0, 0.0); }
std::vector<double> cosine_target(const FeatureMap& f_gt, const FeatureMap& f_render);

struct LossGrad {
  double value = 0;
  std::vector<double> grad;  // dL/d(prediction)
};

/// mean |pred - target| with subgradient 0 at ties.
LossGrad l1_mean(std::span<const double> pred, std::span<const double> target);
inline LossGrad loss_cos(std::span<const double> mask_cells, std::span<const double> m_cos) {
  return l1_mean(mask_cells, m_cos);
}
inline LossGrad loss_residual(const Image& mask, const Image& inlier) {
  require(mask.same_shape(inlier), "loss_residual: shape mismatch");
  return l1_mean(mask.data, inlier.data);
}
/// exp(-iter / beta) * mean(1 - M).
LossGrad loss_reg(const Image& mask, long iter, double beta);

/// Per-pixel mean absolute rgb error, one channel.
Image abs_error_map(const Image& rendered, const Image& gt);
/// 3x3 box blur with borders renormalized.
Image box_blur3(const Image& img);
/// Inlier map (1 = inlier) from an error map: blurred residual <= the rho-quantile
/// sorted[ceil(rho n) - 1]; ties are inliers.
Image inlier_map(const Image& error, double rho);

/// Residual-derived inlier target. `extra_downsample` > 1 box-downsamples both inputs first.
Image residual_target(const Image& rendered, const Image& gt, double rho, int extra_downsample = 1);

enum class CandidateRule { per_pixel, per_image };

/// Residual target using, per pixel (or per image), whichever of the raw and affine renders is
/// closer to the ground truth.
Image residual_target_min(const Image& raw, const Image& affine, const Image& gt, double rho, int extra_downsample,
                          CandidateRule rule);
/// Cosine target choosing per cell (or per image) the candidate with the smaller photometric error
/// over the cell's patch. Images must be at the features' source resolution.
std::vector<double> cosine_target_min(const FeatureMap& f_gt, const FeatureMap& f_raw, const FeatureMap& f_aff,
                                      const Image& raw, const Image& affine, const Image& gt, CandidateRule rule);

struct MaskLossWeights {
  double residual = 0.5;
  double cos = 0.5;
  double reg = 2.0;
  bool operator==(const MaskLossWeights&) const = default;
};

inline double mask_objective(double l_residual, double l_cos, double l_reg, const MaskLossWeights& w = {}) {
  return w.residual * l_residual + w.cos * l_cos + w.reg * l_reg;
}

}  // namespace rsplat
