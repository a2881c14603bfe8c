#pragma once

#include "rsplat/scene.hpp"

namespace rsplat {

/// Screen-space footprint of one projected Gaussian.
struct Splat2D {
  Vec2 mean2d = Vec2::Zero();  // pixels
  Mat2 cov2d = Mat2::Identity();  // pixels^2, includes the 0.3 px^2 low-pass term
  double depth = 0;               // camera-space z
  Vec3 color = Vec3::Zero();
  double alpha_base = 0;          // sigmoid(opacity_logit)
  int source_index = -1;
};

struct RasterSettings {
  double cov2d_dilation = 0.3;    // px^2 added to the projected covariance diagonal
  double alpha_max = 0.999;
  double alpha_min = 1.0 / 255.0; // contributions below this are skipped
  double transmittance_min = 1e-4;
  double guard_band = 0.3;        // fraction of the image size tolerated outside the frustum
  int tile_size = 16;
};

/// Resolution selector; factor 1 is full resolution.
struct RenderMode {
  int factor = 1;
  static RenderMode full_res() { return {1}; }
  static RenderMode low_res(int f) { return {f}; }
};

/// Per-Gaussian densification statistics accumulated over backward passes.
struct GradAccumulator {
  std::vector<double> grad_norm_sum;
  std::vector<int> count;
  std::vector<double> max_radius;  // in full-resolution pixels
  std::vector<Vec3> position_grad_sum;

  void resize(std::size_t n);
  void reset();
  std::size_t size() const { return count.size(); }
  double mean_grad(std::size_t i) const { return count[i] > 0 ? grad_norm_sum[i] / count[i] : 0.0; }
};

/// Per-splat intermediates kept for the backward pass.
struct SplatCache {
  Vec3 cam_pos;        // camera-space center
  Vec4 quat;           // raw (unnormalized) rotation parameters
  Mat3 rotation;       // Gaussian rotation matrix
  Vec3 scale;
  Mat2 conic;          // inverse of Splat2D::cov2d
  Vec3 view_dir;       // unit vector camera -> Gaussian, world space
  double view_dist = 0;
  Vec3 color_pre_clamp;
  double radius = 0;   // conservative pixel radius of the alpha >= alpha_min footprint
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive pixel bbox
};

/// Optional per-splat color transform (e.g. appearance modeling). The transformed colors are
/// rasterized into RenderOutput::aux_image with the same blending weights as the raw colors.
class ColorStage {
 public:
  virtual ~ColorStage() = default;
  virtual void forward(std::span<const Splat2D> splats, std::vector<Vec3>& aux_colors) = 0;
  /// Adds dL/d(raw color) into d_colors; any parameter gradients owned by the stage (including
  /// per-Gaussian embeddings in `grads`) are accumulated by the stage itself.
  virtual void backward(std::span<const Splat2D> splats, std::span<const Vec3> d_aux,
                        std::span<Vec3> d_colors, GaussianSet& grads) = 0;
};

struct RenderTape {
  Camera cam;  // at render resolution
  int factor = 1;
  RasterSettings settings;
  int sh_degree = 0;
  int embed_dim = 0;
  std::size_t gaussian_count = 0;
  std::vector<Splat2D> splats;  // front-to-back
  std::vector<SplatCache> cache;
  std::vector<double> sh;               // SH coefficients per splat, 3 * K each
  std::vector<Vec3> aux_colors;         // empty without a color stage
  std::vector<std::vector<int>> tiles;  // splat indices per tile, front-to-back
  int tiles_x = 0, tiles_y = 0;
  bool reference = false;
};

struct RenderOutput {
  Image image;      // H x W x 3
  Image aux_image;  // H x W x 3 when a color stage was used
  Image alpha_map;  // H x W x 1
  RenderTape tape;
};

/// Projects every Gaussian inside the (guard-banded) frustum, sorted front-to-back with ties broken
/// by source index.
std::vector<Splat2D> project(const GaussianSet& gaussians, const Camera& cam,
                             const RasterSettings& settings = {});

/// Alpha-blends the Gaussians front-to-back. The tiled path parallelizes over tiles.
RenderOutput render(const GaussianSet& gaussians, const Camera& cam, RenderMode mode = {},
                    ColorStage* stage = nullptr, const RasterSettings& settings = {});

/// Scalar path: every splat is tested at every pixel, serially. Bit-identical to render().
RenderOutput render_reference(const GaussianSet& gaussians, const Camera& cam, RenderMode mode = {},
                              ColorStage* stage = nullptr, const RasterSettings& settings = {});

/// Gradients of a scalar loss with respect to every Gaussian parameter given dL/d(image) (and
/// dL/d(aux_image) when a color stage was used). Updates `accum` when non-null.
GaussianSet render_backward(const RenderTape& tape, const Image& d_image, GradAccumulator* accum = nullptr,
                            const Image* d_aux = nullptr, ColorStage* stage = nullptr);

}  // namespace rsplat
