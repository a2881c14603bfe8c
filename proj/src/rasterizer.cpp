#include "rsplat/rasterizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rsplat {

void GradAccumulator::resize(std::size_t n) {
  grad_norm_sum.assign(n, 0.0);
  count.assign(n, 0);
  max_radius.assign(n, 0.0);
  position_grad_sum.assign(n, Vec3::Zero());
}

void GradAccumulator::reset() { resize(size()); }

namespace {

struct Projected {
  std::vector<Splat2D> splats;
  std::vector<SplatCache> cache;
  std::vector<double> sh;
};

Projected project_impl(const GaussianSet& gs, const Camera& cam, const RasterSettings& s) {
  const int ncoef = sh_coeff_count(gs.sh_degree());
  const ShBasis basis{gs.sh_degree()};
  const Vec3 cam_center = cam.center();
  const double gx = s.guard_band * cam.width;
  const double gy = s.guard_band * cam.height;

  std::vector<Splat2D> splats;
  std::vector<SplatCache> cache;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const Vec3 p = gs.position(i);
    const Vec3 tc = cam.to_camera(p);
    const double z = tc.z();
    if (!(z > cam.near && z < cam.far)) continue;
    const double u = cam.fx * tc.x() / z + cam.cx;
    const double v = cam.fy * tc.y() / z + cam.cy;
    if (u < -gx || u > cam.width + gx || v < -gy || v > cam.height + gy) continue;

    SplatCache c;
    c.cam_pos = tc;
    c.quat = gs.rotation(i);
    c.rotation = quat_to_rotation(c.quat);
    c.scale = gs.log_scale(i).array().exp();
    const Mat3 m = c.rotation * c.scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0, -cam.fx * tc.x() / (z * z), 0, cam.fy / z, -cam.fy * tc.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> t = jac * cam.rotation;
    Mat2 cov = t * sigma * t.transpose();
    cov(0, 0) += s.cov2d_dilation;
    cov(1, 1) += s.cov2d_dilation;
    const double det = cov.determinant();
    if (!(det > 0)) continue;
    c.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;

    Vec3 dir = p - cam_center;
    c.view_dist = dir.norm();
    c.view_dir = dir / c.view_dist;
    const auto b = basis.eval(c.view_dir);
    Vec3 col = Vec3::Constant(0.5);
    for (int k = 0; k < ncoef; ++k) col += b[k] * gs.sh(i, k);
    c.color_pre_clamp = col;

    Splat2D sp;
    sp.mean2d = Vec2(u, v);
    sp.cov2d = cov;
    sp.depth = z;
    sp.color = col.cwiseMax(0.0);
    sp.alpha_base = sigmoid(gs.opacity_logit(i));
    sp.source_index = static_cast<int>(i);

    if (sp.alpha_base > s.alpha_min) {
      const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
      const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
      c.radius = std::sqrt(lambda_max * 2.0 * std::log(sp.alpha_base / s.alpha_min)) + 1.0;
      c.x0 = std::max(0, static_cast<int>(std::ceil(u - c.radius - 0.5)));
      c.x1 = std::min(cam.width, static_cast<int>(std::floor(u + c.radius - 0.5)) + 1);
      c.y0 = std::max(0, static_cast<int>(std::ceil(v - c.radius - 0.5)));
      c.y1 = std::min(cam.height, static_cast<int>(std::floor(v + c.radius - 0.5)) + 1);
    }
    splats.push_back(sp);
    cache.push_back(c);
  }

  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
    return splats[a].source_index < splats[b].source_index;
  });

  Projected out;
  out.splats.reserve(order.size());
  out.cache.reserve(order.size());
  out.sh.reserve(order.size() * 3 * ncoef);
  for (int k : order) {
    out.splats.push_back(splats[k]);
    out.cache.push_back(cache[k]);
    const auto row = gs.row(ParamGroup::sh, splats[k].source_index);
    out.sh.insert(out.sh.end(), row.begin(), row.end());
  }
  return out;
}

bool bbox_empty(const SplatCache& c) { return c.x0 >= c.x1 || c.y0 >= c.y1; }

struct Contribution {
  int k;
  double alpha;
  double gauss;  // exp(-q / 2)
  double trans;  // transmittance in front of this splat
  bool clamped;
  Vec2 d;        // pixel center minus mean
};

/// Blends one pixel. When `rec` is non-null the contributing splats are recorded in order.
void blend_pixel(const RenderTape& t, std::span<const int> list, int px, int py, double* rgb, double* aux,
                 double& trans_out, std::vector<Contribution>* rec) {
  const RasterSettings& s = t.settings;
  const bool has_aux = !t.aux_colors.empty();
  const Vec2 pix(px + 0.5, py + 0.5);
  double trans = 1.0;
  double acc[3] = {0, 0, 0};
  double acc_aux[3] = {0, 0, 0};
  for (int k : list) {
    const Splat2D& sp = t.splats[k];
    const Mat2& a = t.cache[k].conic;
    const Vec2 d = pix - sp.mean2d;
    const double q = a(0, 0) * d.x() * d.x() + 2.0 * a(0, 1) * d.x() * d.y() + a(1, 1) * d.y() * d.y();
    const double g = std::exp(-0.5 * q);
    double alpha = sp.alpha_base * g;
    const bool clamped = alpha > s.alpha_max;
    if (clamped) alpha = s.alpha_max;
    if (alpha < s.alpha_min) continue;
    const double next = trans * (1.0 - alpha);
    if (next < s.transmittance_min) break;
    const double w = alpha * trans;
    for (int c = 0; c < 3; ++c) acc[c] += sp.color[c] * w;
    if (has_aux)
      for (int c = 0; c < 3; ++c) acc_aux[c] += t.aux_colors[k][c] * w;
    if (rec) rec->push_back({k, alpha, g, trans, clamped, d});
    trans = next;
  }
  for (int c = 0; c < 3; ++c) rgb[c] = acc[c];
  if (has_aux)
    for (int c = 0; c < 3; ++c) aux[c] = acc_aux[c];
  trans_out = trans;
}

RenderOutput render_impl(const GaussianSet& gs, const Camera& full_cam, RenderMode mode, ColorStage* stage,
                         const RasterSettings& s, bool reference) {
  require(mode.factor == 1 || mode.factor == 2 || mode.factor == 4 || mode.factor == 8,
          "render: resolution factor must be one of 1, 2, 4, 8");
  const Camera cam = full_cam.scaled(mode.factor);

  RenderOutput out;
  RenderTape& t = out.tape;
  t.cam = cam;
  t.factor = mode.factor;
  t.settings = s;
  t.sh_degree = gs.sh_degree();
  t.embed_dim = gs.embed_dim();
  t.gaussian_count = gs.size();
  t.reference = reference;
  Projected proj = project_impl(gs, cam, s);
  t.splats = std::move(proj.splats);
  t.cache = std::move(proj.cache);
  t.sh = std::move(proj.sh);
  if (stage) {
    stage->forward(t.splats, t.aux_colors);
    require(t.aux_colors.size() == t.splats.size(), "ColorStage::forward: wrong number of colors");
  }

  const int ts = s.tile_size;
  t.tiles_x = (cam.width + ts - 1) / ts;
  t.tiles_y = (cam.height + ts - 1) / ts;
  t.tiles.assign(static_cast<std::size_t>(t.tiles_x) * t.tiles_y, {});
  for (int k = 0; k < static_cast<int>(t.splats.size()); ++k) {
    const SplatCache& c = t.cache[k];
    if (reference) {
      for (auto& tile : t.tiles) tile.push_back(k);
      continue;
    }
    if (bbox_empty(c)) continue;
    for (int ty = c.y0 / ts; ty <= (c.y1 - 1) / ts; ++ty)
      for (int tx = c.x0 / ts; tx <= (c.x1 - 1) / ts; ++tx) t.tiles[ty * t.tiles_x + tx].push_back(k);
  }

  out.image = Image(cam.width, cam.height, 3);
  out.alpha_map = Image(cam.width, cam.height, 1);
  if (stage) out.aux_image = Image(cam.width, cam.height, 3);
  auto run_tile = [&](int tile) {
    const int tx = tile % t.tiles_x, ty = tile / t.tiles_x;
    const auto& list = t.tiles[tile];
    for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
      for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
        double trans = 1.0;
        double aux[3];
        blend_pixel(t, list, px, py, out.image.pixel(px, py), stage ? out.aux_image.pixel(px, py) : aux, trans,
                    nullptr);
        out.alpha_map.at(px, py) = 1.0 - trans;
      }
    }
  };
  const int ntiles = static_cast<int>(t.tiles.size());
  if (reference) {
    for (int i = 0; i < ntiles; ++i) run_tile(i);
  } else {
    parallel_for(ntiles, run_tile);
  }
  return out;
}

struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  Mat2 conic = Mat2::Zero();  // dL/dA treating all four entries as independent
  double alpha_base = 0;
  Vec3 color = Vec3::Zero();
  Vec3 aux = Vec3::Zero();
};

}  // namespace

std::vector<Splat2D> project(const GaussianSet& gaussians, const Camera& cam, const RasterSettings& settings) {
  return project_impl(gaussians, cam, settings).splats;
}

RenderOutput render(const GaussianSet& gaussians, const Camera& cam, RenderMode mode, ColorStage* stage,
                    const RasterSettings& settings) {
  return render_impl(gaussians, cam, mode, stage, settings, false);
}

RenderOutput render_reference(const GaussianSet& gaussians, const Camera& cam, RenderMode mode,
                              ColorStage* stage, const RasterSettings& settings) {
  return render_impl(gaussians, cam, mode, stage, settings, true);
}

GaussianSet render_backward(const RenderTape& t, const Image& d_image, GradAccumulator* accum, const Image* d_aux,
                            ColorStage* stage) {
  const Camera& cam = t.cam;
  require(d_image.width == cam.width && d_image.height == cam.height && d_image.channels == 3,
          "render_backward: d_image shape does not match the tape");
  const bool has_aux = !t.aux_colors.empty();
  require(!d_aux || (has_aux && d_aux->same_shape(d_image)), "render_backward: d_aux shape mismatch");
  require(!has_aux || stage, "render_backward: tape has aux colors but no color stage was given");
  if (accum) require(accum->size() == t.gaussian_count, "render_backward: accumulator size mismatch");

  const int ts = t.settings.tile_size;
  const int ntiles = static_cast<int>(t.tiles.size());
  std::vector<std::vector<SplatGrad>> partial(ntiles);

  auto run_tile = [&](int tile) {
    const int tx = tile % t.tiles_x, ty = tile / t.tiles_x;
    const auto& list = t.tiles[tile];
    auto& part = partial[tile];
    part.assign(list.size(), SplatGrad{});
    // Position of each splat inside this tile's list, used to address the partial buffer.
    std::vector<int> slot(t.splats.size(), -1);
    for (int j = 0; j < static_cast<int>(list.size()); ++j) slot[list[j]] = j;
    std::vector<Contribution> rec;
    for (int py = ty * ts; py < std::min(cam.height, (ty + 1) * ts); ++py) {
      for (int px = tx * ts; px < std::min(cam.width, (tx + 1) * ts); ++px) {
        const double* g = d_image.pixel(px, py);
        const double* ga = d_aux ? d_aux->pixel(px, py) : nullptr;
        if (g[0] == 0 && g[1] == 0 && g[2] == 0 && (!ga || (ga[0] == 0 && ga[1] == 0 && ga[2] == 0))) continue;
        rec.clear();
        double rgb[3], aux[3], trans;
        blend_pixel(t, list, px, py, rgb, aux, trans, &rec);
        Vec3 behind = Vec3::Zero();      // sum over later splats of c * alpha * T
        Vec3 behind_aux = Vec3::Zero();
        for (int r = static_cast<int>(rec.size()) - 1; r >= 0; --r) {
          const Contribution& c = rec[r];
          const Splat2D& sp = t.splats[c.k];
          SplatGrad& out = part[slot[c.k]];
          const double w = c.alpha * c.trans;
          double d_alpha = 0.0;
          for (int ch = 0; ch < 3; ++ch) {
            out.color[ch] += g[ch] * w;
            d_alpha += g[ch] * (sp.color[ch] * c.trans - behind[ch] / (1.0 - c.alpha));
          }
          behind += sp.color * w;
          if (has_aux) {
            const Vec3& ac = t.aux_colors[c.k];
            if (ga) {
              for (int ch = 0; ch < 3; ++ch) {
                out.aux[ch] += ga[ch] * w;
                d_alpha += ga[ch] * (ac[ch] * c.trans - behind_aux[ch] / (1.0 - c.alpha));
              }
            }
            behind_aux += ac * w;
          }
          if (c.clamped) continue;
          out.alpha_base += d_alpha * c.gauss;
          const double d_q = -0.5 * c.alpha * d_alpha;
          const Mat2& a = t.cache[c.k].conic;
          out.mean += d_q * (-2.0) * (a * c.d);
          out.conic(0, 0) += d_q * c.d.x() * c.d.x();
          out.conic(0, 1) += d_q * c.d.x() * c.d.y();
          out.conic(1, 0) += d_q * c.d.x() * c.d.y();
          out.conic(1, 1) += d_q * c.d.y() * c.d.y();
        }
      }
    }
  };
  if (t.reference) {
    for (int i = 0; i < ntiles; ++i) run_tile(i);
  } else {
    parallel_for(ntiles, run_tile);
  }

  const std::size_t ns = t.splats.size();
  std::vector<SplatGrad> total(ns);
  for (int tile = 0; tile < ntiles; ++tile) {
    const auto& list = t.tiles[tile];
    for (std::size_t j = 0; j < list.size(); ++j) {
      const SplatGrad& p = partial[tile][j];
      SplatGrad& dst = total[list[j]];
      dst.mean += p.mean;
      dst.conic += p.conic;
      dst.alpha_base += p.alpha_base;
      dst.color += p.color;
      dst.aux += p.aux;
    }
  }

  GaussianSet grads(t.sh_degree, t.embed_dim);
  grads = GaussianSet::zeros_like(grads, t.gaussian_count);

  std::vector<Vec3> d_colors(ns);
  for (std::size_t k = 0; k < ns; ++k) d_colors[k] = total[k].color;
  if (has_aux) {
    std::vector<Vec3> d_aux_colors(ns);
    for (std::size_t k = 0; k < ns; ++k) d_aux_colors[k] = total[k].aux;
    stage->backward(t.splats, d_aux_colors, d_colors, grads);
  }

  const ShBasis basis{t.sh_degree};
  const int ncoef = basis.size();
  const double half_diag = 0.5 * std::hypot(static_cast<double>(cam.width), static_cast<double>(cam.height));
  for (std::size_t k = 0; k < ns; ++k) {
    const Splat2D& sp = t.splats[k];
    const SplatCache& c = t.cache[k];
    const SplatGrad& sg = total[k];
    const int src = sp.source_index;

    // color -> SH coefficients and view direction
    Vec3 dc = d_colors[k];
    for (int ch = 0; ch < 3; ++ch)
      if (c.color_pre_clamp[ch] < 0) dc[ch] = 0.0;
    std::array<double, kMaxShCoeffs> b;
    std::array<Vec3, kMaxShCoeffs> bg;
    basis.eval_with_grad(c.view_dir, b, bg);
    Vec3 d_dir = Vec3::Zero();
    const double* shk = &t.sh[k * 3 * ncoef];
    for (int j = 0; j < ncoef; ++j) {
      for (int ch = 0; ch < 3; ++ch) grads.sh(src, j)[ch] = dc[ch] * b[j];
      const double proj = dc[0] * shk[3 * j] + dc[1] * shk[3 * j + 1] + dc[2] * shk[3 * j + 2];
      d_dir += proj * bg[j];
    }
    Vec3 d_pos = (d_dir - c.view_dir * c.view_dir.dot(d_dir)) / c.view_dist;

    // opacity
    const double o = sp.alpha_base;
    grads.opacity_logit(src) = sg.alpha_base * o * (1.0 - o);

    // conic -> 2D covariance -> 3D covariance and camera-space position
    const Mat2& a = c.conic;
    const Mat2 d_cov2d = -a * sg.conic * a;
    const double z = c.cam_pos.z(), x = c.cam_pos.x(), y = c.cam_pos.y();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0, -cam.fx * x / (z * z), 0, cam.fy / z, -cam.fy * y / (z * z);
    const Eigen::Matrix<double, 2, 3> tm = jac * cam.rotation;
    const Mat3 m = c.rotation * c.scale.asDiagonal();
    const Mat3 sigma = m * m.transpose();
    const Mat3 d_sigma = tm.transpose() * d_cov2d * tm;
    const Eigen::Matrix<double, 2, 3> d_tm = 2.0 * d_cov2d * tm * sigma;
    const Eigen::Matrix<double, 2, 3> d_jac = d_tm * cam.rotation.transpose();

    Vec3 d_tc;
    d_tc.x() = sg.mean.x() * cam.fx / z + d_jac(0, 2) * (-cam.fx / (z * z));
    d_tc.y() = sg.mean.y() * cam.fy / z + d_jac(1, 2) * (-cam.fy / (z * z));
    d_tc.z() = sg.mean.x() * (-cam.fx * x / (z * z)) + sg.mean.y() * (-cam.fy * y / (z * z)) +
               d_jac(0, 0) * (-cam.fx / (z * z)) + d_jac(0, 2) * (2.0 * cam.fx * x / (z * z * z)) +
               d_jac(1, 1) * (-cam.fy / (z * z)) + d_jac(1, 2) * (2.0 * cam.fy * y / (z * z * z));
    d_pos += cam.rotation.transpose() * d_tc;
    grads.position(src) = d_pos;

    // 3D covariance -> scale and rotation
    const Mat3 d_m = 2.0 * d_sigma * m;
    Vec3 d_scale;
    for (int j = 0; j < 3; ++j) d_scale[j] = d_m.col(j).dot(c.rotation.col(j));
    grads.log_scale(src) = d_scale.cwiseProduct(c.scale);
    grads.rotation(src) = quat_to_rotation_backward(c.quat, d_m * c.scale.asDiagonal());

    if (accum && !bbox_empty(c)) {
      accum->grad_norm_sum[src] += sg.mean.norm() * half_diag;
      accum->count[src] += 1;
      accum->max_radius[src] = std::max(accum->max_radius[src], c.radius * t.factor);
      accum->position_grad_sum[src] += d_pos;
    }
  }
  return grads;
}

}  // namespace rsplat
