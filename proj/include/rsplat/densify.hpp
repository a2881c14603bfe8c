#pragma once

#include "rsplat/optim.hpp"
#include "rsplat/rasterizer.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace rsplat {

/// Adaptive density control schedule. Growth is held back until `start_iter`.
struct DensifySchedule {
  long start_iter = 1000;
  long interval = 25;
  long stop_iter = 2400;
  double grad_threshold = 2e-4;        // on the half-diagonal-normalized positional statistic
  double scale_split_threshold = 0.01;  // fraction of scene extent
  double min_opacity = 0.005;
  long opacity_reset_interval = 0;      // 0 disables
  double max_screen_radius_frac = 0.25; // of the image diagonal; <= 0 disables the large-splat prune
  double max_world_scale_frac = 0.1;    // of scene extent; <= 0 disables
  std::size_t max_gaussians = 3000;

  /// Throws ConfigError unless 0 < start < stop <= total and interval >= 1.
  void validate(long total_iters) const;
  bool growth_enabled() const { return std::isfinite(grad_threshold); }
};

/// Per-pass bookkeeping.
struct DensifyReport {
  long iter = 0;
  bool acted = false;
  std::size_t count = 0;
  std::size_t clones = 0;
  std::size_t splits = 0;
  std::size_t prunes = 0;
  bool growth_skipped_cap = false;
};

/// Optimizer moments that must follow the Gaussian rows through clone/split/prune.
struct GaussianMoments {
  GaussianSet m;
  GaussianSet v;
};

/// Clone/split/prune pass. A strict no-op unless start_iter <= iter < stop_iter and iter is a multiple
/// of the interval. Resets `accum` after acting. `extent` is the scene extent in world units and
/// `position_lr` the current positional learning rate (used for the clone offset).
DensifyReport densify_step(GaussianSet& gaussians, GradAccumulator& accum, const DensifySchedule& sched, long iter,
                           double extent, double position_lr, std::mt19937_64& rng, GaussianMoments* moments = nullptr,
                           int image_width = 0, int image_height = 0);

/// Clamps every opacity above 0.01 down to 0.01 when the schedule says so. Returns true if applied.
bool opacity_reset(GaussianSet& gaussians, long iter, const DensifySchedule& sched, GaussianMoments* moments = nullptr);

}  // namespace rsplat
