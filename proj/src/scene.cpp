#include "rsplat/scene.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace rsplat {

namespace {

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

}  // namespace

std::array<double, kMaxShCoeffs> ShBasis::eval(const Vec3& dir) const {
  std::array<double, kMaxShCoeffs> b{};
  std::array<Vec3, kMaxShCoeffs> unused;
  eval_with_grad(dir, b, unused);
  return b;
}

void ShBasis::eval_with_grad(const Vec3& dir, std::array<double, kMaxShCoeffs>& b,
                             std::array<Vec3, kMaxShCoeffs>& g) const {
  require(degree >= 0 && degree <= kMaxShDegree, "ShBasis: degree must be in [0, 3]");
  b.fill(0.0);
  for (auto& v : g) v.setZero();
  const double x = dir.x(), y = dir.y(), z = dir.z();
  b[0] = kShC0;
  if (degree < 1) return;
  b[1] = -kShC1 * y;
  g[1] = Vec3(0, -kShC1, 0);
  b[2] = kShC1 * z;
  g[2] = Vec3(0, 0, kShC1);
  b[3] = -kShC1 * x;
  g[3] = Vec3(-kShC1, 0, 0);
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  b[4] = kShC2[0] * x * y;
  g[4] = Vec3(kShC2[0] * y, kShC2[0] * x, 0);
  b[5] = kShC2[1] * y * z;
  g[5] = Vec3(0, kShC2[1] * z, kShC2[1] * y);
  b[6] = kShC2[2] * (2 * zz - xx - yy);
  g[6] = Vec3(-2 * kShC2[2] * x, -2 * kShC2[2] * y, 4 * kShC2[2] * z);
  b[7] = kShC2[3] * x * z;
  g[7] = Vec3(kShC2[3] * z, 0, kShC2[3] * x);
  b[8] = kShC2[4] * (xx - yy);
  g[8] = Vec3(2 * kShC2[4] * x, -2 * kShC2[4] * y, 0);
  if (degree < 3) return;
  b[9] = kShC3[0] * y * (3 * xx - yy);
  g[9] = Vec3(6 * kShC3[0] * x * y, kShC3[0] * (3 * xx - 3 * yy), 0);
  b[10] = kShC3[1] * x * y * z;
  g[10] = Vec3(kShC3[1] * y * z, kShC3[1] * x * z, kShC3[1] * x * y);
  b[11] = kShC3[2] * y * (4 * zz - xx - yy);
  g[11] = Vec3(-2 * kShC3[2] * x * y, kShC3[2] * (4 * zz - xx - 3 * yy), 8 * kShC3[2] * y * z);
  b[12] = kShC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  g[12] = Vec3(-6 * kShC3[3] * x * z, -6 * kShC3[3] * y * z, kShC3[3] * (6 * zz - 3 * xx - 3 * yy));
  b[13] = kShC3[4] * x * (4 * zz - xx - yy);
  g[13] = Vec3(kShC3[4] * (4 * zz - 3 * xx - yy), -2 * kShC3[4] * x * y, 8 * kShC3[4] * x * z);
  b[14] = kShC3[5] * z * (xx - yy);
  g[14] = Vec3(2 * kShC3[5] * x * z, -2 * kShC3[5] * y * z, kShC3[5] * (xx - yy));
  b[15] = kShC3[6] * x * (xx - 3 * yy);
  g[15] = Vec3(kShC3[6] * (3 * xx - 3 * yy), -6 * kShC3[6] * x * y, 0);
}

int Gaussian3D::sh_degree() const {
  for (int d = 0; d <= kMaxShDegree; ++d)
    if (sh_coeff_count(d) == static_cast<int>(sh_coeffs.size())) return d;
  throw ConfigError("Gaussian3D: SH coefficient count " + std::to_string(sh_coeffs.size()) +
                    " does not match any degree in [0, 3]");
}

Mat3 quat_to_rotation(const Vec4& q_raw) {
  const Vec4 q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quat_to_rotation_backward(const Vec4& q_raw, const Mat3& d) {
  const double norm = q_raw.norm();
  const Vec4 q = q_raw / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2 * (-z * d(0, 1) + y * d(0, 2) + z * d(1, 0) - x * d(1, 2) - y * d(2, 0) + x * d(2, 1));
  dq[1] = 2 * (y * d(0, 1) + z * d(0, 2) + y * d(1, 0) - 2 * x * d(1, 1) - w * d(1, 2) + z * d(2, 0) +
               w * d(2, 1) - 2 * x * d(2, 2));
  dq[2] = 2 * (-2 * y * d(0, 0) + x * d(0, 1) + w * d(0, 2) + x * d(1, 0) + z * d(1, 2) - w * d(2, 0) +
               z * d(2, 1) - 2 * y * d(2, 2));
  dq[3] = 2 * (-2 * z * d(0, 0) - w * d(0, 1) + x * d(0, 2) + w * d(1, 0) - 2 * z * d(1, 1) + y * d(1, 2) +
               x * d(2, 0) + y * d(2, 1));
  // back through q / |q|
  return (dq - q * q.dot(dq)) / norm;
}

Vec3 eval_sh_color(const Gaussian3D& g, const Vec3& view_dir) {
  const ShBasis basis{g.sh_degree()};
  const auto b = basis.eval(view_dir);
  Vec3 c = Vec3::Constant(0.5);
  for (int k = 0; k < basis.size(); ++k) c += b[k] * g.sh_coeffs[k];
  return c.cwiseMax(0.0);
}

Mat3 covariance_3d(const Gaussian3D& g) {
  const Mat3 r = quat_to_rotation(g.rotation);
  const Vec3 s2 = (2.0 * g.log_scale).array().exp();
  return r * s2.asDiagonal() * r.transpose();
}

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::position: return "position";
    case ParamGroup::rotation: return "rotation";
    case ParamGroup::log_scale: return "log_scale";
    case ParamGroup::opacity: return "opacity";
    case ParamGroup::sh: return "sh";
    case ParamGroup::embedding: return "embedding";
  }
  return "?";
}

GaussianSet::GaussianSet(int sh_degree, int embed_dim) : sh_degree_(sh_degree), embed_dim_(embed_dim) {
  require(sh_degree >= 0 && sh_degree <= kMaxShDegree, "GaussianSet: SH degree must be in [0, 3]");
  require(embed_dim >= 0, "GaussianSet: negative embedding dimension");
}

GaussianSet GaussianSet::zeros_like(const GaussianSet& other, std::size_t n) {
  GaussianSet out(other.sh_degree_, other.embed_dim_);
  out.n_ = n;
  for (int g = 0; g < kParamGroupCount; ++g)
    out.cols_[g].assign(n * out.width(static_cast<ParamGroup>(g)), 0.0);
  return out;
}

int GaussianSet::width(ParamGroup g) const {
  switch (g) {
    case ParamGroup::position: return 3;
    case ParamGroup::rotation: return 4;
    case ParamGroup::log_scale: return 3;
    case ParamGroup::opacity: return 1;
    case ParamGroup::sh: return 3 * sh_coeff_count(sh_degree_);
    case ParamGroup::embedding: return embed_dim_;
  }
  return 0;
}

std::span<double> GaussianSet::row(ParamGroup g, std::size_t i) {
  const int w = width(g);
  return std::span<double>(cols_[static_cast<int>(g)]).subspan(i * w, w);
}

std::span<const double> GaussianSet::row(ParamGroup g, std::size_t i) const {
  const int w = width(g);
  return std::span<const double>(cols_[static_cast<int>(g)]).subspan(i * w, w);
}

Gaussian3D GaussianSet::get(std::size_t i) const {
  Gaussian3D g;
  g.position = position(i);
  g.rotation = rotation(i);
  g.log_scale = log_scale(i);
  g.opacity_logit = opacity_logit(i);
  g.sh_coeffs.resize(sh_coeff_count(sh_degree_));
  for (int k = 0; k < sh_coeff_count(sh_degree_); ++k) g.sh_coeffs[k] = sh(i, k);
  if (embed_dim_ > 0) g.gs_embedding = embedding(i);
  return g;
}

void GaussianSet::set(std::size_t i, const Gaussian3D& g) {
  require(static_cast<int>(g.sh_coeffs.size()) == sh_coeff_count(sh_degree_),
          "GaussianSet: SH coefficient count mismatch");
  require(g.gs_embedding.size() == embed_dim_ || (g.gs_embedding.size() == 0 && embed_dim_ == 0),
          "GaussianSet: embedding dimension mismatch");
  position(i) = g.position;
  rotation(i) = g.rotation;
  log_scale(i) = g.log_scale;
  opacity_logit(i) = g.opacity_logit;
  for (int k = 0; k < sh_coeff_count(sh_degree_); ++k) sh(i, k) = g.sh_coeffs[k];
  if (embed_dim_ > 0) embedding(i) = g.gs_embedding;
}

void GaussianSet::push_back(const Gaussian3D& g) {
  const std::size_t i = push_zero();
  set(i, g);
}

std::size_t GaussianSet::push_zero() {
  for (int g = 0; g < kParamGroupCount; ++g)
    cols_[g].resize(cols_[g].size() + width(static_cast<ParamGroup>(g)), 0.0);
  return n_++;
}

std::size_t GaussianSet::push_copy(std::size_t i) {
  const std::size_t j = push_zero();
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto pg = static_cast<ParamGroup>(g);
    auto src = row(pg, i);
    auto dst = row(pg, j);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return j;
}

void GaussianSet::filter(const std::vector<char>& keep) {
  require(keep.size() == n_, "GaussianSet::filter: mask size mismatch");
  std::size_t kept = 0;
  for (int g = 0; g < kParamGroupCount; ++g) {
    const int w = width(static_cast<ParamGroup>(g));
    auto& col = cols_[g];
    std::size_t out = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!keep[i]) continue;
      for (int k = 0; k < w; ++k) col[out * w + k] = col[i * w + k];
      ++out;
    }
    col.resize(out * w);
    kept = out;
  }
  n_ = kept;
}

void GaussianSet::set_zero() {
  for (auto& c : cols_) std::fill(c.begin(), c.end(), 0.0);
}

bool GaussianSet::all_finite() const {
  for (const auto& c : cols_)
    for (double v : c)
      if (!std::isfinite(v)) return false;
  return true;
}

Camera Camera::scaled(int factor) const {
  require(factor >= 1, "Camera::scaled: factor must be >= 1");
  Camera c = *this;
  c.fx /= factor;
  c.fy /= factor;
  c.cx /= factor;
  c.cy /= factor;
  c.width = width / factor;
  c.height = height / factor;
  return c;
}

void Camera::validate() const {
  require(width >= 8 && height >= 8, "Camera: width and height must be >= 8");
  require(fx > 0 && fy > 0, "Camera: focal lengths must be positive");
  require(near > 0 && near < far, "Camera: need 0 < near < far");
  const Mat3 rtr = rotation.transpose() * rotation;
  require((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9, "Camera: rotation not orthonormal");
  require(rotation.determinant() > 0, "Camera: rotation determinant must be +1");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_x_rad) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.rotation.row(0) = right.transpose();
  c.rotation.row(1) = down.transpose();
  c.rotation.row(2) = forward.transpose();
  c.translation = -c.rotation * eye;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_x_rad);
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  return c;
}

}  // namespace rsplat
