#pragma once

#include "rsplat/appearance.hpp"
#include "rsplat/config.hpp"
#include "rsplat/densify.hpp"
#include "rsplat/metrics.hpp"
#include "rsplat/synth_data.hpp"
#include "rsplat/transient_mask.hpp"

#include <array>
#include <optional>

namespace rsplat {

/// Shapes of the tensors feeding mask supervision in one iteration.
struct SupervisionShape {
  long iter = 0;
  CascadePhase phase = CascadePhase::high;
  int render_w = 0, render_h = 0;      // render compared against the ground truth
  int residual_w = 0, residual_h = 0;  // inlier map grid
  int feature_w = 0, feature_h = 0;    // cosine target grid
  int input_w = 0, input_h = 0;        // mask input feature grid
};

struct StepLog {
  long iter = 0;
  int view_id = 0;
  std::size_t gaussian_count = 0;  // count used for this iteration's render
  double loss = 0;
  double l1 = 0;
  double dssim = 0;
  std::optional<double> mask_objective;
};

/// Reference-style scene extent: 1.1 x the largest camera distance from the camera centroid.
double camera_extent(const std::vector<const DatasetView*>& views);

/// Gaussians initialized from points: nearest-neighbour scales, identity rotation, opacity 0.1.
GaussianSet init_gaussians(const InitPoints& pts, int sh_degree, int embed_dim, int fourier_bands);

class Trainer {
 public:
  Trainer(RunConfig cfg, Dataset ds);

  const RunConfig& config() const { return cfg_; }
  const Toggles& toggles() const { return tog_; }
  const Dataset& dataset() const { return ds_; }
  long iteration() const { return iter_; }
  bool done() const { return iter_ >= cfg_.total_iters; }
  double extent() const { return extent_; }
  std::size_t initial_count() const { return initial_count_; }
  const GaussianSet& gaussians() const { return gs_; }
  const std::optional<MaskModel>& mask_model() const { return mask_; }
  const SmallMlp* appearance_mlp() const { return tog_.appearance ? &affine_mlp_ : nullptr; }
  const ImageEmbeddingTable& image_embeddings() const { return table_; }
  std::array<long, kParamGroupCount> skipped_gaussian_steps() const { return skipped_; }

  /// Runs one optimization iteration followed by density control. Throws NumericError on a
  /// non-finite loss.
  void step();

  /// Logs of the most recent step().
  const StepLog& last_step() const { return last_step_; }
  const std::optional<SupervisionShape>& last_shape() const { return last_shape_; }
  const DensifyReport& last_densify() const { return last_densify_; }

  /// Raw render; with appearance modeling the affine render for `embedding` is also produced.
  RenderOutput render_view(const Camera& cam, std::span<const double> embedding = {}) const;
  /// Predicted full-resolution mask for a training view (all ones without a mask model).
  Image predict_train_mask(std::size_t train_index) const;

  /// Test-view metrics under the configured protocol.
  EvalReport evaluate_test() const;
  /// Train-view PSNR/SSIM against the training images plus mask IoU against the oracle.
  EvalReport evaluate_train() const;

  std::string checkpoint_bytes() const;
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores the full training state. The checkpoint must come from the same configuration.
  void load_checkpoint(const std::filesystem::path& path);
  void load_checkpoint_bytes(const std::string& bytes, const std::string& source);

 private:
  struct ViewCache {
    const DatasetView* view = nullptr;
    Image gt_low;
    FeatureMap feat_high;       // builtin features of the ground truth
    FeatureMap feat_low;        // builtin features of the low-resolution ground truth
    FeatureMap input_high;      // mask input features
    FeatureMap input_low;
  };

  int next_view();
  double mask_step(const ViewCache& vc, const MaskForward& fwd, const RenderOutput& full, int train_index,
                   CascadePhase phase);
  void adam_gaussians(const GaussianSet& grads);

  RunConfig cfg_;
  Toggles tog_;
  Dataset ds_;
  std::vector<ViewCache> train_;
  PatchDescriptorExtractor extractor_;
  DensifySchedule densify_;
  CascadeSchedule cascade_;
  double extent_ = 1;
  std::size_t initial_count_ = 0;

  long iter_ = 0;
  std::mt19937_64 view_rng_;
  std::mt19937_64 densify_rng_;
  std::vector<int> epoch_order_;
  std::size_t epoch_cursor_ = 0;

  GaussianSet gs_;
  GaussianMoments moments_;
  std::array<long, kParamGroupCount> steps_{};
  std::array<long, kParamGroupCount> skipped_{};
  GradAccumulator accum_;

  std::optional<MaskModel> mask_;
  AdamState mask_adam_;
  SmallMlp affine_mlp_;
  AdamState affine_adam_;
  ImageEmbeddingTable table_;
  AdamState table_adam_;

  StepLog last_step_;
  std::optional<SupervisionShape> last_shape_;
  DensifyReport last_densify_;
};

}  // namespace rsplat
