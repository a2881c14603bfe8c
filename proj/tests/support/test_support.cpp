#include "test_support.hpp"

#include <algorithm>

namespace rsplat::testing {

GaussianSet random_scene(std::mt19937_64& rng, int n, int sh_degree, int embed_dim) {
  std::uniform_real_distribution<double> u(-1, 1);
  GaussianSet gs(sh_degree, embed_dim);
  for (int i = 0; i < n; ++i) {
    Gaussian3D g;
    g.position = Vec3(0.4 * u(rng), 0.4 * u(rng), 0.5 * u(rng));
    g.rotation = Vec4(u(rng), u(rng), u(rng), u(rng));
    g.log_scale = Vec3(-1.5 + 0.3 * u(rng), -1.5 + 0.3 * u(rng), -1.5 + 0.3 * u(rng));
    g.opacity_logit = u(rng);
    g.sh_coeffs.resize(sh_coeff_count(sh_degree));
    for (auto& c : g.sh_coeffs) c = 0.5 * Vec3(u(rng), u(rng), u(rng));
    if (embed_dim > 0) {
      g.gs_embedding.resize(embed_dim);
      for (int k = 0; k < embed_dim; ++k) g.gs_embedding[k] = 0.5 * u(rng);
    }
    gs.push_back(g);
  }
  return gs;
}

Camera small_camera(int w, int h) { return Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3(0, -1, 0), w, h, 0.6); }

Image random_image(std::mt19937_64& rng, int w, int h, int c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h, c);
  for (auto& v : img.data) v = u(rng);
  return img;
}

double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

void FdStats::merge(const FdStats& o) {
  if (o.worst > worst) {
    worst = o.worst;
    worst_where = o.worst_where;
  }
  checked += o.checked;
  screened += o.screened;
}

FdStats RasterFdReport::total() const {
  FdStats t;
  for (const auto& g : groups) t.merge(g);
  t.merge(mlp);
  t.merge(image_embedding);
  return t;
}

namespace {

double dot(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

RasterFdReport raster_fd_check(std::mt19937_64& rng, int n, const RasterSettings& settings, bool with_appearance,
                               double h, bool screen) {
  const Camera cam = small_camera();
  AppearanceConfig acfg;
  acfg.hidden = 16;
  GaussianSet gs = random_scene(rng, n, 2, with_appearance ? acfg.gaussian_dim : 0);
  SmallMlp mlp;
  std::vector<double> f_img;
  if (with_appearance) {
    mlp = make_appearance_mlp(acfg, rng);
    // a nonzero head so the affine branch actually depends on its inputs
    std::normal_distribution<double> nd(0, 0.3);
    for (auto& p : mlp.params()) p += nd(rng) * 0.3;
    f_img.resize(acfg.image_dim);
    for (auto& v : f_img) v = nd(rng);
  }
  const Image w = random_image(rng, cam.width, cam.height, 3);
  const Image w_aux = random_image(rng, cam.width, cam.height, 3);

  auto loss = [&]() {
    if (!with_appearance) return dot(render(gs, cam, {}, nullptr, settings).image, w);
    AffineStage st(mlp, f_img, gs);
    const RenderOutput o = render(gs, cam, {}, &st, settings);
    return dot(o.image, w) + dot(o.aux_image, w_aux);
  };

  RasterFdReport rep;
  GaussianSet grads;
  std::vector<double> d_mlp, d_img;
  if (with_appearance) {
    AffineStage st(mlp, f_img, gs);
    const RenderOutput o = render(gs, cam, {}, &st, settings);
    grads = render_backward(o.tape, w, nullptr, &w_aux, &st);
    d_mlp = st.d_mlp;
    d_img = st.d_image_embedding;
  } else {
    grads = render_backward(render(gs, cam, {}, nullptr, settings).tape, w);
  }
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto pg = static_cast<ParamGroup>(g);
    rep.groups[g] = fd_check(gs.column(pg), grads.column(pg), loss, h, param_group_name(pg), screen);
  }
  if (with_appearance) {
    rep.mlp = fd_check(mlp.params(), d_mlp, loss, h, "affine_mlp", screen);
    rep.image_embedding = fd_check(std::span<double>(f_img), d_img, loss, h, "image_embedding", screen);
  }
  return rep;
}

FdStats mlp_fd_check(const SmallMlp& mlp_in, std::mt19937_64& rng, int batch, double h, bool screen) {
  SmallMlp mlp = mlp_in;
  std::normal_distribution<double> nd(0, 1);
  Eigen::MatrixXd x(mlp.input_dim(), batch);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  Eigen::MatrixXd w(mlp.output_dim(), batch);
  for (int i = 0; i < w.size(); ++i) w.data()[i] = nd(rng);
  auto loss = [&]() { return (mlp.forward(x).array() * w.array()).sum(); };
  SmallMlp::Tape tape;
  mlp.forward(x, &tape);
  std::vector<double> d_params(mlp.param_count(), 0.0);
  const Eigen::MatrixXd d_x = mlp.backward(tape, w, d_params);
  FdStats s = fd_check(mlp.params(), d_params, loss, h, "mlp_params", screen);
  std::vector<double> dx(d_x.data(), d_x.data() + d_x.size());
  s.merge(fd_check(std::span<double>(x.data(), x.size()), dx, loss, h, "mlp_input", screen));
  return s;
}

GaussianSet two_splat_scene(const Camera& cam) {
  // pixel (px, py) has its center at (px + 0.5, py + 0.5); put both splat centers there
  const int px = cam.width / 2, py = cam.height / 2;
  auto at_depth = [&](double z) {
    return Vec3((px + 0.5 - cam.cx) / cam.fx * z, (py + 0.5 - cam.cy) / cam.fy * z, z);
  };
  GaussianSet gs(0, 0);
  Gaussian3D front, back;
  front.position = cam.rotation.transpose() * (at_depth(2.0) - cam.translation);
  back.position = cam.rotation.transpose() * (at_depth(3.0) - cam.translation);
  front.log_scale = back.log_scale = Vec3::Constant(std::log(0.05));
  front.opacity_logit = back.opacity_logit = 0.0;  // opacity 0.5
  front.sh_coeffs = {Vec3(0.5 / kShC0, -2.0, -2.0)};
  back.sh_coeffs = {Vec3(-2.0, 0.5 / kShC0, -2.0)};
  gs.push_back(front);
  gs.push_back(back);
  return gs;
}

PixelTrace blend_pixel(const std::vector<Splat2D>& splats, int px, int py, const RasterSettings& s) {
  PixelTrace t;
  double T = 1;
  const Vec2 p(px + 0.5, py + 0.5);
  for (const auto& sp : splats) {
    const Vec2 d = p - sp.mean2d;
    const double a = std::min(s.alpha_max, sp.alpha_base * std::exp(-0.5 * d.dot(sp.cov2d.inverse() * d)));
    if (a < s.alpha_min) continue;
    const double next = T * (1 - a);
    if (next < s.transmittance_min) break;
    t.transmittance.push_back(T);
    t.weights.push_back(a * T);
    t.color += a * T * sp.color;
    T = next;
  }
  t.alpha = 1 - T;
  return t;
}

}  // namespace rsplat::testing
