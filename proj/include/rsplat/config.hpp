#pragma once

#include "rsplat/appearance.hpp"
#include "rsplat/densify.hpp"
#include "rsplat/transient_mask.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace rsplat {

enum class Mode { baseline, robustsplat, plusplus };

const char* mode_name(Mode m);
/// Accepts "3dgs-baseline"/"baseline", "robustsplat", "robustsplat-plusplus"/"plusplus".
Mode parse_mode(const std::string& s);

/// The five independently switchable components.
struct Toggles {
  bool mask = false;
  bool dg = false;          // delayed growth
  bool mb = false;          // scale-cascaded mask bootstrapping
  bool mr = false;          // early mask regularization
  bool appearance = false;

  static Toggles for_mode(Mode m);
  bool operator==(const Toggles&) const = default;
};

enum class EvalProtocol { full, left_fit_right_eval };
const char* protocol_name(EvalProtocol p);
EvalProtocol parse_protocol(const std::string& s);

enum class FeatureSource { builtin, file };

struct LearningRates {
  double position_init = 1.6e-4;   // times the scene extent
  double position_final = 1.6e-6;  // times the scene extent
  double opacity = 0.05;
  double scale = 5e-3;
  double rotation = 1e-3;
  double sh = 2.5e-3;
  double mask_mlp = 1e-3;
  double affine_mlp = 5e-4;
  double image_embedding = 1e-3;
  double gaussian_embedding = 5e-3;
  bool operator==(const LearningRates&) const = default;
};

struct RunConfig {
  Mode mode = Mode::robustsplat;
  std::optional<Toggles> toggles;  // overrides the mode's toggles when present
  std::string dataset_dir;
  long total_iters = 3000;
  std::uint64_t seed = 1;
  int sh_degree = 2;
  double ssim_lambda = 0.2;

  // densification; start/stop/beta left unset resolve from total_iters and the toggles
  std::optional<long> densify_start_iter;
  std::optional<long> densify_stop_iter;
  long densify_interval = 25;
  double grad_threshold = 2e-4;
  double scale_split_extent_frac = 0.01;
  double min_opacity = 0.005;
  std::optional<long> opacity_reset_interval;
  double max_screen_radius_diag_frac = 0.25;
  double max_world_scale_extent_frac = 0.1;
  std::size_t max_gaussians = 3000;

  int low_res_factor = 2;
  int residual_downsample = 4;

  int mask_hidden = 64;
  MaskLossWeights mask_weights;
  std::optional<double> beta_reg_iters;
  double residual_rho = 0.7;
  int feature_patch = 4;
  FeatureSource feature_source = FeatureSource::builtin;
  CandidateRule candidate_rule = CandidateRule::per_pixel;

  AppearanceConfig appearance;
  int testtime_steps = 128;
  double testtime_lr = 0.01;

  LearningRates lr;

  EvalProtocol protocol = EvalProtocol::full;
  long eval_interval = 0;        // 0 = only at the end
  long checkpoint_interval = 0;  // 0 = only at the end
  bool write_snapshots = true;

  Toggles effective_toggles() const { return toggles.value_or(Toggles::for_mode(mode)); }
  /// Densify start: explicit value, else total/3 with delayed growth and total/60 without.
  long effective_densify_start() const;
  long effective_densify_stop() const;
  double effective_beta_reg() const;
  long effective_opacity_reset_interval() const;
  DensifySchedule densify_schedule() const;
  CascadeSchedule cascade_schedule() const;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys and type mismatches raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace rsplat
