#pragma once

#include "rsplat/optim.hpp"
#include "rsplat/rasterizer.hpp"

#include <optional>

namespace rsplat {

struct AppearanceConfig {
  int image_dim = 16;
  int gaussian_dim = 12;
  int fourier_bands = 2;
  int hidden = 128;
  double image_init_std = 0.01;
  bool operator==(const AppearanceConfig&) const = default;
};

/// One embedding row per training image, flat row-major.
class ImageEmbeddingTable {
 public:
  ImageEmbeddingTable() = default;
  ImageEmbeddingTable(int rows, int dim, double init_std, std::mt19937_64& rng);

  int rows() const { return rows_; }
  int dim() const { return dim_; }
  std::span<double> row(int i) { return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)}; }
  std::span<const double> row(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
  }
  std::vector<double> mean() const;
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  bool operator==(const ImageEmbeddingTable&) const = default;

 private:
  int rows_ = 0;
  int dim_ = 0;
  std::vector<double> data_;
};

/// sin/cos(2^b pi x) for each axis and band (bands outer, then sin/cos, then axis), zero-padded to
/// `dim`. `p` is expected in [0, 1]^3.
Eigen::VectorXd fourier_encode(const Vec3& p, int bands, int dim);
/// Encodes every Gaussian's position normalized to the set's bounding box into its embedding.
void init_gaussian_embeddings(GaussianSet& gaussians, int bands);

/// Three-layer MLP over [color, f_img, f_gs] with the identity-at-init head.
SmallMlp make_appearance_mlp(const AppearanceConfig& cfg, std::mt19937_64& rng);

/// (alpha, beta) for one input.
std::pair<Vec3, Vec3> affine_coeffs(const SmallMlp& mlp, const Vec3& color, std::span<const double> f_img,
                                    std::span<const double> f_gs);
/// max(alpha * c + beta, 0).
inline Vec3 apply_affine(const Vec3& c, const Vec3& alpha, const Vec3& beta) {
  return (alpha.cwiseProduct(c) + beta).cwiseMax(0.0);
}

/// Color stage computing per-view affine colors for every visible splat. Gradients for the MLP and
/// the image embedding are accumulated into `d_mlp` / `d_image_embedding`; per-Gaussian embedding
/// gradients go into the rasterizer's gradient set.
class AffineStage final : public ColorStage {
 public:
  AffineStage(const SmallMlp& mlp, std::span<const double> image_embedding, const GaussianSet& gaussians);

  void forward(std::span<const Splat2D> splats, std::vector<Vec3>& aux_colors) override;
  void backward(std::span<const Splat2D> splats, std::span<const Vec3> d_aux, std::span<Vec3> d_colors,
                GaussianSet& grads) override;

  std::vector<double> d_mlp;
  std::vector<double> d_image_embedding;

 private:
  const SmallMlp& mlp_;
  std::vector<double> f_img_;
  const GaussianSet& gaussians_;
  SmallMlp::Tape tape_;
  Eigen::MatrixXd out_;
};

struct PhotometricLoss {
  double value = 0;
  double l1 = 0;     // mean masked |C_aff - gt|
  double dssim = 0;  // mean masked (1 - ssim(C_raw, gt)) / 2
  Image d_affine;    // dL/dC_aff
  Image d_raw;       // dL/dC_raw
};

/// (1 - lambda) mean(M |C_aff - gt|) + lambda mean(M (1 - ssim_map(C_raw, gt)) / 2), means over all
/// pixels and channels. `mask` (one channel) is treated as a constant; null means all ones.
PhotometricLoss photometric_loss(const Image& c_affine, const Image& c_raw, const Image& gt, const Image* mask,
                                 double lambda = 0.2);

struct TestTimeFitOptions {
  int steps = 128;
  double lr = 0.01;
};

/// Fits a fresh image embedding (starting at `init`) to `gt` with the masked L1 term on `region`,
/// keeping the scene and MLP frozen.
std::vector<double> testtime_fit_embedding(const GaussianSet& gaussians, const SmallMlp& mlp, std::vector<double> init,
                                           const Camera& cam, const Image& gt, const Region& region,
                                           const TestTimeFitOptions& opt = {}, const Image* mask = nullptr);

/// Affine render of the scene for one embedding.
RenderOutput render_affine(const GaussianSet& gaussians, const SmallMlp& mlp, std::span<const double> image_embedding,
                           const Camera& cam, RenderMode mode = {});

}  // namespace rsplat
