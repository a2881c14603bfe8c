#pragma once

#include "rsplat/common.hpp"

#include <array>
#include <span>

namespace rsplat {

constexpr int kMaxShDegree = 3;
constexpr int kMaxShCoeffs = 16;
constexpr double kShC0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real spherical-harmonics basis (graphics sign convention) up to degree 3.
struct ShBasis {
  int degree = 0;

  int size() const { return sh_coeff_count(degree); }
  /// Basis values at a unit direction; entries beyond size() are zero.
  std::array<double, kMaxShCoeffs> eval(const Vec3& dir) const;
  /// Basis values plus the gradient of each basis polynomial with respect to the direction components.
  /// No renormalization is differentiated; callers project onto the tangent plane.
  void eval_with_grad(const Vec3& dir, std::array<double, kMaxShCoeffs>& basis,
                      std::array<Vec3, kMaxShCoeffs>& grad) const;
};

/// One anisotropic splat in world space. Scale and opacity are stored in unconstrained form.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // (w, x, y, z), unit norm
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::vector<Vec3> sh_coeffs{Vec3::Zero()};
  Eigen::VectorXd gs_embedding;  // empty unless appearance modeling is on

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
  int sh_degree() const;
};

/// Rotation matrix of a quaternion (w, x, y, z); the quaternion is normalized first.
Mat3 quat_to_rotation(const Vec4& q);
/// Gradient of a scalar loss with respect to the raw quaternion, given dL/dR.
Vec4 quat_to_rotation_backward(const Vec4& q, const Mat3& dR);

/// SH color + 0.5, clamped below at 0.
Vec3 eval_sh_color(const Gaussian3D& g, const Vec3& view_dir);
/// R diag(exp(2 s)) R^T.
Mat3 covariance_3d(const Gaussian3D& g);

enum class ParamGroup : int { position = 0, rotation, log_scale, opacity, sh, embedding };
inline constexpr int kParamGroupCount = 6;
const char* param_group_name(ParamGroup g);

/// Structure-of-arrays container of Gaussians. The same shape doubles as gradient and optimizer
/// moment storage so densification edits can be mirrored on all of them.
class GaussianSet {
 public:
  GaussianSet() : GaussianSet(0, 0) {}
  GaussianSet(int sh_degree, int embed_dim);

  /// Zero-filled set with the same layout and `n` rows.
  static GaussianSet zeros_like(const GaussianSet& other, std::size_t n);
  static GaussianSet zeros_like(const GaussianSet& other) { return zeros_like(other, other.size()); }

  int sh_degree() const { return sh_degree_; }
  int embed_dim() const { return embed_dim_; }
  std::size_t size() const { return n_; }
  int width(ParamGroup g) const;

  std::span<double> column(ParamGroup g) { return cols_[static_cast<int>(g)]; }
  std::span<const double> column(ParamGroup g) const { return cols_[static_cast<int>(g)]; }
  std::span<double> row(ParamGroup g, std::size_t i);
  std::span<const double> row(ParamGroup g, std::size_t i) const;

  Eigen::Map<Vec3> position(std::size_t i) { return Eigen::Map<Vec3>(row(ParamGroup::position, i).data()); }
  Eigen::Map<const Vec3> position(std::size_t i) const {
    return Eigen::Map<const Vec3>(row(ParamGroup::position, i).data());
  }
  Eigen::Map<Vec4> rotation(std::size_t i) { return Eigen::Map<Vec4>(row(ParamGroup::rotation, i).data()); }
  Eigen::Map<const Vec4> rotation(std::size_t i) const {
    return Eigen::Map<const Vec4>(row(ParamGroup::rotation, i).data());
  }
  Eigen::Map<Vec3> log_scale(std::size_t i) { return Eigen::Map<Vec3>(row(ParamGroup::log_scale, i).data()); }
  Eigen::Map<const Vec3> log_scale(std::size_t i) const {
    return Eigen::Map<const Vec3>(row(ParamGroup::log_scale, i).data());
  }
  double& opacity_logit(std::size_t i) { return cols_[3][i]; }
  double opacity_logit(std::size_t i) const { return cols_[3][i]; }
  /// Coefficient k of Gaussian i as an rgb triple.
  Eigen::Map<Vec3> sh(std::size_t i, int k) { return Eigen::Map<Vec3>(row(ParamGroup::sh, i).data() + 3 * k); }
  Eigen::Map<const Vec3> sh(std::size_t i, int k) const {
    return Eigen::Map<const Vec3>(row(ParamGroup::sh, i).data() + 3 * k);
  }
  Eigen::Map<Eigen::VectorXd> embedding(std::size_t i) {
    return Eigen::Map<Eigen::VectorXd>(row(ParamGroup::embedding, i).data(), embed_dim_);
  }
  Eigen::Map<const Eigen::VectorXd> embedding(std::size_t i) const {
    return Eigen::Map<const Eigen::VectorXd>(row(ParamGroup::embedding, i).data(), embed_dim_);
  }

  Gaussian3D get(std::size_t i) const;
  void set(std::size_t i, const Gaussian3D& g);
  void push_back(const Gaussian3D& g);
  /// Appends a zero row; returns its index.
  std::size_t push_zero();
  /// Appends a copy of row i; returns the new index.
  std::size_t push_copy(std::size_t i);
  /// Keeps rows where keep[i] is true, preserving order.
  void filter(const std::vector<char>& keep);
  void set_zero();
  bool all_finite() const;

  bool operator==(const GaussianSet& o) const = default;

 private:
  int sh_degree_ = 0;
  int embed_dim_ = 0;
  std::size_t n_ = 0;
  std::array<std::vector<double>, kParamGroupCount> cols_;
};

/// Pinhole camera with a rigid world-to-camera transform (x right, y down, z forward).
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();
  double near = 0.01;
  double far = 100.0;

  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  /// Intrinsics and resolution divided by `factor`; pose unchanged.
  Camera scaled(int factor) const;
  /// Throws ContractError when intrinsics/pose/resolution are invalid.
  void validate() const;

  /// Camera at `eye` looking at `target`; `up` approximates the world up direction.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        double fov_x_rad);
};

}  // namespace rsplat
