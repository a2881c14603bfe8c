#include "rsplat/appearance.hpp"

#include "rsplat/metrics.hpp"

#include <cmath>
#include <numbers>

namespace rsplat {

ImageEmbeddingTable::ImageEmbeddingTable(int rows, int dim, double init_std, std::mt19937_64& rng)
    : rows_(rows), dim_(dim), data_(static_cast<std::size_t>(rows) * dim) {
  require(rows >= 0 && dim > 0, "ImageEmbeddingTable: bad shape");
  std::normal_distribution<double> n(0.0, init_std);
  for (double& v : data_) v = n(rng);
}

std::vector<double> ImageEmbeddingTable::mean() const {
  std::vector<double> m(dim_, 0.0);
  if (rows_ == 0) return m;
  for (int r = 0; r < rows_; ++r)
    for (int k = 0; k < dim_; ++k) m[k] += data_[static_cast<std::size_t>(r) * dim_ + k];
  for (double& v : m) v /= rows_;
  return m;
}

Eigen::VectorXd fourier_encode(const Vec3& p, int bands, int dim) {
  require(6 * bands <= dim, "fourier_encode: 6 * bands exceeds the embedding size");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  int k = 0;
  for (int b = 0; b < bands; ++b) {
    const double f = std::ldexp(std::numbers::pi, b);
    for (int a = 0; a < 3; ++a) e[k++] = std::sin(f * p[a]);
    for (int a = 0; a < 3; ++a) e[k++] = std::cos(f * p[a]);
  }
  return e;
}

void init_gaussian_embeddings(GaussianSet& gs, int bands) {
  if (gs.size() == 0 || gs.embed_dim() == 0) return;
  Vec3 lo = gs.position(0), hi = gs.position(0);
  for (std::size_t i = 1; i < gs.size(); ++i) {
    lo = lo.cwiseMin(Vec3(gs.position(i)));
    hi = hi.cwiseMax(Vec3(gs.position(i)));
  }
  const Vec3 span = (hi - lo).cwiseMax(1e-12);
  for (std::size_t i = 0; i < gs.size(); ++i)
    gs.embedding(i) = fourier_encode((gs.position(i) - lo).cwiseQuotient(span), bands, gs.embed_dim());
}

SmallMlp make_appearance_mlp(const AppearanceConfig& cfg, std::mt19937_64& rng) {
  SmallMlp mlp = make_affine_mlp(3 + cfg.image_dim + cfg.gaussian_dim, cfg.hidden);
  mlp.init_uniform(rng);
  init_affine_head(mlp);
  return mlp;
}

std::pair<Vec3, Vec3> affine_coeffs(const SmallMlp& mlp, const Vec3& color, std::span<const double> f_img,
                                    std::span<const double> f_gs) {
  require(static_cast<int>(3 + f_img.size() + f_gs.size()) == mlp.input_dim(), "affine_coeffs: input dim mismatch");
  Eigen::VectorXd x(mlp.input_dim());
  x.head<3>() = color;
  for (std::size_t k = 0; k < f_img.size(); ++k) x[3 + k] = f_img[k];
  for (std::size_t k = 0; k < f_gs.size(); ++k) x[3 + f_img.size() + k] = f_gs[k];
  const Eigen::VectorXd y = mlp.forward(x);
  return {Vec3::Ones() + y.head<3>(), y.segment<3>(3)};
}

AffineStage::AffineStage(const SmallMlp& mlp, std::span<const double> f_img, const GaussianSet& gaussians)
    : d_mlp(mlp.param_count(), 0.0),
      d_image_embedding(f_img.size(), 0.0),
      mlp_(mlp),
      f_img_(f_img.begin(), f_img.end()),
      gaussians_(gaussians) {
  require(static_cast<int>(3 + f_img.size()) + gaussians.embed_dim() == mlp.input_dim(),
          "AffineStage: embedding dims do not match the MLP input");
}

void AffineStage::forward(std::span<const Splat2D> splats, std::vector<Vec3>& aux) {
  const int di = static_cast<int>(f_img_.size()), dg = gaussians_.embed_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(splats.size());
  Eigen::MatrixXd x(mlp_.input_dim(), n);
  const Eigen::Map<const Eigen::VectorXd> fi(f_img_.data(), di);
  for (Eigen::Index k = 0; k < n; ++k) {
    x.col(k).head<3>() = splats[k].color;
    x.col(k).segment(3, di) = fi;
    x.col(k).tail(dg) = gaussians_.embedding(splats[k].source_index);
  }
  out_ = mlp_.forward(x, &tape_);
  aux.resize(splats.size());
  for (Eigen::Index k = 0; k < n; ++k)
    aux[k] = apply_affine(splats[k].color, Vec3::Ones() + out_.col(k).head<3>(), out_.col(k).segment<3>(3));
}

void AffineStage::backward(std::span<const Splat2D> splats, std::span<const Vec3> d_aux, std::span<Vec3> d_colors,
                           GaussianSet& grads) {
  const int di = static_cast<int>(f_img_.size()), dg = gaussians_.embed_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(splats.size());
  Eigen::MatrixXd dy(6, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec3& c = splats[k].color;
    const Vec3 alpha = Vec3::Ones() + out_.col(k).head<3>();
    const Vec3 pre = alpha.cwiseProduct(c) + out_.col(k).segment<3>(3);
    Vec3 g = d_aux[k];
    for (int ch = 0; ch < 3; ++ch)
      if (pre[ch] <= 0) g[ch] = 0;
    dy.col(k).head<3>() = g.cwiseProduct(c);
    dy.col(k).segment<3>(3) = g;
    d_colors[k] += g.cwiseProduct(alpha);
  }
  const Eigen::MatrixXd dx = mlp_.backward(tape_, dy, d_mlp);
  for (Eigen::Index k = 0; k < n; ++k) {
    d_colors[k] += dx.col(k).head<3>();
    for (int j = 0; j < di; ++j) d_image_embedding[j] += dx(3 + j, k);
    if (dg > 0) grads.embedding(splats[k].source_index) += dx.col(k).tail(dg);
  }
}

PhotometricLoss photometric_loss(const Image& c_aff, const Image& c_raw, const Image& gt, const Image* mask,
                                 double lambda) {
  require(c_aff.same_shape(gt) && c_raw.same_shape(gt) && gt.channels == 3, "photometric_loss: shape mismatch");
  require(!mask || (mask->width == gt.width && mask->height == gt.height && mask->channels == 1),
          "photometric_loss: mask shape mismatch");
  PhotometricLoss out;
  out.d_affine = Image(gt.width, gt.height, 3);
  out.d_raw = Image(gt.width, gt.height, 3);
  const double inv = 1.0 / static_cast<double>(gt.data.size());
  const Image s = ssim_map(c_raw, gt);
  Image d_map(gt.width, gt.height, 3);
  for (std::size_t p = 0; p < gt.pixel_count(); ++p) {
    const double m = mask ? mask->data[p] : 1.0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = p * 3 + c;
      const double d = c_aff.data[i] - gt.data[i];
      out.l1 += m * std::abs(d);
      out.dssim += m * 0.5 * (1.0 - s.data[i]);
      out.d_affine.data[i] = (1 - lambda) * inv * m * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
      d_map.data[i] = -0.5 * lambda * inv * m;
    }
  }
  out.l1 *= inv;
  out.dssim *= inv;
  out.value = (1 - lambda) * out.l1 + lambda * out.dssim;
  if (lambda != 0) ssim_map_backward(c_raw, gt, d_map, out.d_raw);
  return out;
}

RenderOutput render_affine(const GaussianSet& gs, const SmallMlp& mlp, std::span<const double> f_img,
                           const Camera& cam, RenderMode mode) {
  AffineStage stage(mlp, f_img, gs);
  return render(gs, cam, mode, &stage);
}

std::vector<double> testtime_fit_embedding(const GaussianSet& gs, const SmallMlp& mlp, std::vector<double> f,
                                           const Camera& cam, const Image& gt, const Region& region,
                                           const TestTimeFitOptions& opt, const Image* mask) {
  require(gt.width == cam.width && gt.height == cam.height && gt.channels == 3, "testtime_fit_embedding: bad image");
  require(!region.empty(), "testtime_fit_embedding: empty region");
  AdamState adam(f.size(), opt.lr);
  const double inv = 1.0 / (static_cast<double>(region.width()) * region.height() * 3);
  for (int step = 0; step < opt.steps; ++step) {
    AffineStage stage(mlp, f, gs);
    RenderOutput r = render(gs, cam, RenderMode::full_res(), &stage);
    Image d_aux(gt.width, gt.height, 3);
    for (int y = region.y0; y < region.y1; ++y)
      for (int x = region.x0; x < region.x1; ++x) {
        const double m = mask ? mask->at(x, y) : 1.0;
        for (int c = 0; c < 3; ++c) {
          const double d = r.aux_image.at(x, y, c) - gt.at(x, y, c);
          d_aux.at(x, y, c) = inv * m * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
        }
      }
    const Image d_img(gt.width, gt.height, 3);
    render_backward(r.tape, d_img, nullptr, &d_aux, &stage);
    adam.step(f, stage.d_image_embedding);
  }
  return f;
}

}  // namespace rsplat
