#pragma once

#include "rsplat/features.hpp"
#include "rsplat/scene.hpp"

#include <array>
#include <filesystem>
#include <optional>

namespace rsplat {

struct TransientSpec {
  int count_per_image = 0;
  int min_size = 12;  // pixels
  int max_size = 24;
  double opacity = 1.0;
  bool shadow_blob = false;  // additionally darken a soft blob near each sprite
};

struct IlluminationSpec {
  bool enabled = false;
  double alpha_min = 0.6, alpha_max = 1.4;
  double beta_min = -0.1, beta_max = 0.1;
};

struct SyntheticSceneSpec {
  std::uint64_t seed = 1;
  int num_gaussians = 300;
  double extent = 1.0;  // radius of the ball holding the ground-truth Gaussians
  int sh_degree = 1;
  int num_train = 24;
  int num_test = 6;
  int width = 96;
  int height = 64;
  double fov_x_deg = 50.0;
  double camera_distance = 3.0;
  TransientSpec transients;
  IlluminationSpec illumination;
  double init_fraction = 0.5;
  double init_noise = 0.01;  // fraction of extent
  bool write_features = false;
  int feature_patch = 4;
};

struct Affine3 {
  Vec3 alpha = Vec3::Ones();
  Vec3 beta = Vec3::Zero();
};

struct DatasetView {
  int id = 0;
  std::string name;
  bool train = true;
  Camera cam;
  Image image;                        // rgb, quantized to 8 bit
  Image oracle_mask;                  // 1 channel, 1 = static
  Affine3 illum;                      // identity unless the dataset is illumination-perturbed
  std::optional<FeatureMap> features; // precomputed ground-truth features when present
};

struct InitPoints {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
};

struct Dataset {
  std::vector<DatasetView> views;
  InitPoints points;
  bool has_masks = false;
  bool has_illumination = false;

  std::vector<const DatasetView*> train_views() const;
  std::vector<const DatasetView*> test_views() const;
};

/// In-memory generation result; `clean` holds the transient-free, unperturbed renders.
struct SyntheticScene {
  GaussianSet ground_truth;
  Dataset dataset;
  std::vector<Image> clean;
};

SyntheticScene generate_scene(const SyntheticSceneSpec& spec);
/// Writes the on-disk layout into `dir` (created if needed).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// generate_scene + write_dataset.
Dataset generate(const SyntheticSceneSpec& spec, const std::filesystem::path& dir);
/// Throws IoError with the offending path for malformed or inconsistent inputs.
Dataset load_dataset(const std::filesystem::path& dir);

/// The affine perturbation as applied to an 8-bit image: quantize(clamp(alpha * img + beta)).
Image apply_illumination(const Image& img, const Affine3& a);

SyntheticSceneSpec spec_from_json_file(const std::filesystem::path& path);
std::string spec_to_json(const SyntheticSceneSpec& spec);

}  // namespace rsplat
