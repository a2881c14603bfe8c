#include "rsplat/transient_mask.hpp"

#include <algorithm>
#include <cmath>

namespace rsplat {

const char* phase_name(CascadePhase p) { return p == CascadePhase::low ? "low" : "high"; }

MaskModel::MaskModel(int feature_dim, int hidden, std::mt19937_64& rng) : mlp_(make_mask_mlp(feature_dim, hidden)) {
  mlp_.init_uniform(rng);
}

MaskForward MaskModel::forward(const FeatureMap& feat) const {
  require(feat.channels == mlp_.input_dim(), "MaskModel: feature dim " + std::to_string(feat.channels) +
                                                 " does not match MLP input " + std::to_string(mlp_.input_dim()));
  MaskForward out;
  out.grid_w = feat.grid_w;
  out.grid_h = feat.grid_h;
  const Eigen::Map<const Eigen::MatrixXd> x(feat.data.data(), feat.channels, static_cast<Eigen::Index>(feat.cell_count()));
  const Eigen::MatrixXd y = mlp_.forward(x, &out.tape);
  out.cells.assign(y.data(), y.data() + y.size());
  return out;
}

void MaskModel::backward(const MaskForward& fwd, std::span<const double> d_cells, std::span<double> d_params) const {
  require(d_cells.size() == fwd.cells.size(), "MaskModel::backward: gradient size mismatch");
  const Eigen::Map<const Eigen::MatrixXd> d(d_cells.data(), 1, static_cast<Eigen::Index>(d_cells.size()));
  mlp_.backward(fwd.tape, d, d_params);
}

namespace {

struct Tap {
  int i0, i1;
  double t;
};

std::vector<Tap> taps(int grid, int out) {
  std::vector<Tap> v(out);
  const double s = static_cast<double>(grid) / out;
  for (int x = 0; x < out; ++x) {
    const double u = std::clamp((x + 0.5) * s - 0.5, 0.0, static_cast<double>(grid - 1));
    const int i0 = static_cast<int>(std::floor(u));
    v[x] = {i0, std::min(i0 + 1, grid - 1), u - i0};
  }
  return v;
}

}  // namespace

Image upsample_cells(std::span<const double> cells, int grid_w, int grid_h, int out_w, int out_h) {
  require(cells.size() == static_cast<std::size_t>(grid_w) * grid_h, "upsample_cells: cell count mismatch");
  const auto tx = taps(grid_w, out_w), ty = taps(grid_h, out_h);
  Image out(out_w, out_h, 1);
  for (int y = 0; y < out_h; ++y) {
    const Tap& b = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& a = tx[x];
      const double top = (1 - a.t) * cells[b.i0 * grid_w + a.i0] + a.t * cells[b.i0 * grid_w + a.i1];
      const double bot = (1 - a.t) * cells[b.i1 * grid_w + a.i0] + a.t * cells[b.i1 * grid_w + a.i1];
      out.at(x, y) = (1 - b.t) * top + b.t * bot;
    }
  }
  return out;
}

std::vector<double> upsample_cells_backward(const Image& d_out, int grid_w, int grid_h) {
  require(d_out.channels == 1, "upsample_cells_backward: expected one channel");
  const auto tx = taps(grid_w, d_out.width), ty = taps(grid_h, d_out.height);
  std::vector<double> d(static_cast<std::size_t>(grid_w) * grid_h, 0.0);
  for (int y = 0; y < d_out.height; ++y) {
    const Tap& b = ty[y];
    for (int x = 0; x < d_out.width; ++x) {
      const Tap& a = tx[x];
      const double g = d_out.at(x, y);
      d[b.i0 * grid_w + a.i0] += (1 - b.t) * (1 - a.t) * g;
      d[b.i0 * grid_w + a.i1] += (1 - b.t) * a.t * g;
      d[b.i1 * grid_w + a.i0] += b.t * (1 - a.t) * g;
      d[b.i1 * grid_w + a.i1] += b.t * a.t * g;
    }
  }
  return d;
}

Image predict_mask(const MaskModel& model, const FeatureMap& feat, int out_w, int out_h) {
  const MaskForward f = model.forward(feat);
  return upsample_cells(f.cells, f.grid_w, f.grid_h, out_w, out_h);
}

std::vector<double> cosine_target(const FeatureMap& f_gt, const FeatureMap& f_render) {
  auto c = cosine_similarity(f_gt, f_render);
  for (double& v : c) v = cosine_to_target(v);
  return c;
}

LossGrad l1_mean(std::span<const double> pred, std::span<const double> target) {
  require(pred.size() == target.size() && !pred.empty(), "l1_mean: size mismatch");
  LossGrad out;
  out.grad.resize(pred.size());
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.value += std::abs(d);
    out.grad[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  out.value *= inv;
  return out;
}

LossGrad loss_reg(const Image& mask, long iter, double beta) {
  require(beta > 0, "loss_reg: beta must be positive");
  const double w = std::exp(-static_cast<double>(iter) / beta);
  const double inv = 1.0 / static_cast<double>(mask.data.size());
  LossGrad out;
  out.grad.assign(mask.data.size(), -w * inv);
  double s = 0;
  for (double m : mask.data) s += 1.0 - m;
  out.value = w * s * inv;
  return out;
}

Image abs_error_map(const Image& rendered, const Image& gt) {
  require(rendered.same_shape(gt), "abs_error_map: shape mismatch");
  Image e(gt.width, gt.height, 1);
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    double s = 0;
    for (int c = 0; c < gt.channels; ++c) s += std::abs(rendered.data[i * gt.channels + c] - gt.data[i * gt.channels + c]);
    e.data[i] = s / gt.channels;
  }
  return e;
}

Image box_blur3(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0;
        int n = 0;
        for (int yy = std::max(0, y - 1); yy <= std::min(img.height - 1, y + 1); ++yy)
          for (int xx = std::max(0, x - 1); xx <= std::min(img.width - 1, x + 1); ++xx) {
            s += img.at(xx, yy, c);
            ++n;
          }
        out.at(x, y, c) = s / n;
      }
  return out;
}

Image inlier_map(const Image& error, double rho) {
  require(rho > 0 && rho <= 1, "inlier_map: rho must be in (0, 1]");
  const Image r = box_blur3(error);
  std::vector<double> sorted = r.data;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(sorted.size())));
  const double thr = sorted[std::clamp<std::size_t>(k, 1, sorted.size()) - 1];
  Image out(r.width, r.height, 1);
  for (std::size_t i = 0; i < r.data.size(); ++i) out.data[i] = r.data[i] <= thr ? 1.0 : 0.0;
  return out;
}

Image residual_target(const Image& rendered, const Image& gt, double rho, int extra_downsample) {
  require(rendered.same_shape(gt), "residual_target: shape mismatch");
  if (extra_downsample > 1)
    return inlier_map(abs_error_map(downsample(rendered, extra_downsample), downsample(gt, extra_downsample)), rho);
  return inlier_map(abs_error_map(rendered, gt), rho);
}

namespace {

double mean_of(const Image& img) {
  double s = 0;
  for (double v : img.data) s += v;
  return s / static_cast<double>(img.data.size());
}

}  // namespace

Image residual_target_min(const Image& raw, const Image& affine, const Image& gt, double rho, int extra_downsample,
                          CandidateRule rule) {
  require(raw.same_shape(gt) && affine.same_shape(gt), "residual_target_min: shape mismatch");
  const int f = std::max(1, extra_downsample);
  const Image g = f > 1 ? downsample(gt, f) : gt;
  const Image er = abs_error_map(f > 1 ? downsample(raw, f) : raw, g);
  const Image ea = abs_error_map(f > 1 ? downsample(affine, f) : affine, g);
  if (rule == CandidateRule::per_image) return inlier_map(mean_of(ea) < mean_of(er) ? ea : er, rho);
  Image e = er;
  for (std::size_t i = 0; i < e.data.size(); ++i) e.data[i] = std::min(er.data[i], ea.data[i]);
  return inlier_map(e, rho);
}

std::vector<double> cosine_target_min(const FeatureMap& f_gt, const FeatureMap& f_raw, const FeatureMap& f_aff,
                                      const Image& raw, const Image& affine, const Image& gt, CandidateRule rule) {
  require(f_gt.same_grid(f_raw) && f_gt.same_grid(f_aff), "cosine_target_min: feature grids differ");
  require(raw.same_shape(gt) && affine.same_shape(gt), "cosine_target_min: image shape mismatch");
  const auto t_raw = cosine_target(f_gt, f_raw);
  const auto t_aff = cosine_target(f_gt, f_aff);
  const Image er = abs_error_map(raw, gt), ea = abs_error_map(affine, gt);
  if (rule == CandidateRule::per_image) return mean_of(ea) < mean_of(er) ? t_aff : t_raw;
  const int p = f_gt.patch_size;
  std::vector<double> out(t_raw.size());
  for (int gy = 0; gy < f_gt.grid_h; ++gy)
    for (int gx = 0; gx < f_gt.grid_w; ++gx) {
      double sr = 0, sa = 0;
      for (int y = gy * p; y < std::min(gt.height, (gy + 1) * p); ++y)
        for (int x = gx * p; x < std::min(gt.width, (gx + 1) * p); ++x) {
          sr += er.at(x, y);
          sa += ea.at(x, y);
        }
      const std::size_t i = static_cast<std::size_t>(gy) * f_gt.grid_w + gx;
      out[i] = sa < sr ? t_aff[i] : t_raw[i];
    }
  return out;
}

}  // namespace rsplat
