#include "rsplat/densify.hpp"

#include <cmath>

namespace rsplat {

void DensifySchedule::validate(long total_iters) const {
  if (!(start_iter > 0 && start_iter < stop_iter && stop_iter <= total_iters))
    throw ConfigError("densify: need 0 < start_iter < stop_iter <= total_iters (got " + std::to_string(start_iter) +
                      ", " + std::to_string(stop_iter) + ", " + std::to_string(total_iters) + ")");
  if (interval < 1) throw ConfigError("densify: interval must be >= 1");
  if (!(grad_threshold > 0)) throw ConfigError("densify: grad_threshold must be positive");
  if (opacity_reset_interval < 0) throw ConfigError("densify: opacity_reset_interval must be >= 0");
}

namespace {

void mirror_push(GaussianMoments* moments) {
  if (!moments) return;
  moments->m.push_zero();
  moments->v.push_zero();
}

}  // namespace

DensifyReport densify_step(GaussianSet& gs, GradAccumulator& accum, const DensifySchedule& sched, long iter,
                           double extent, double position_lr, std::mt19937_64& rng, GaussianMoments* moments,
                           int image_width, int image_height) {
  DensifyReport rep;
  rep.iter = iter;
  rep.count = gs.size();
  // Without a finite threshold adaptive density control is switched off entirely.
  if (!sched.growth_enabled()) return rep;
  if (iter < sched.start_iter || iter >= sched.stop_iter || iter % sched.interval != 0) return rep;
  require(accum.size() == gs.size(), "densify_step: accumulator size mismatch");
  if (moments) require(moments->m.size() == gs.size() && moments->v.size() == gs.size(), "densify_step: moments size");
  rep.acted = true;

  const std::size_t n = gs.size();
  std::vector<std::size_t> clone_ids, split_ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(accum.mean_grad(i) >= sched.grad_threshold)) continue;
    const double max_scale = gs.log_scale(i).array().exp().maxCoeff();
    if (max_scale <= sched.scale_split_threshold * extent)
      clone_ids.push_back(i);
    else
      split_ids.push_back(i);
  }

  std::vector<char> keep(n, 1);
  if (n + clone_ids.size() + split_ids.size() > sched.max_gaussians) {
    rep.growth_skipped_cap = true;
  } else {
    for (std::size_t i : clone_ids) {
      const std::size_t j = gs.push_copy(i);
      const Vec3 g = accum.position_grad_sum[i];
      if (g.norm() > 0) gs.position(j) -= position_lr * g.normalized();
      keep.push_back(1);
      mirror_push(moments);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i : split_ids) {
      const Mat3 rot = quat_to_rotation(gs.rotation(i));
      const Vec3 scale = gs.log_scale(i).array().exp();
      for (int child = 0; child < 2; ++child) {
        const Vec3 z(normal(rng), normal(rng), normal(rng));
        const std::size_t j = gs.push_copy(i);
        gs.position(j) += rot * scale.cwiseProduct(z);
        gs.log_scale(j).array() -= std::log(1.6);
        keep.push_back(1);
        mirror_push(moments);
      }
      keep[i] = 0;
    }
    rep.clones = clone_ids.size();
    rep.splits = split_ids.size();
  }

  const double diag = std::hypot(static_cast<double>(image_width), static_cast<double>(image_height));
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!keep[i]) continue;
    bool prune = sigmoid(gs.opacity_logit(i)) < sched.min_opacity;
    if (sched.max_world_scale_frac > 0)
      prune = prune || gs.log_scale(i).array().exp().maxCoeff() > sched.max_world_scale_frac * extent;
    if (i < n && sched.max_screen_radius_frac > 0 && diag > 0)
      prune = prune || accum.max_radius[i] > sched.max_screen_radius_frac * diag;
    if (prune) {
      keep[i] = 0;
      ++rep.prunes;
    }
  }
  gs.filter(keep);
  if (moments) {
    moments->m.filter(keep);
    moments->v.filter(keep);
  }
  accum.resize(gs.size());
  rep.count = gs.size();
  return rep;
}

bool opacity_reset(GaussianSet& gs, long iter, const DensifySchedule& sched, GaussianMoments* moments) {
  if (!sched.growth_enabled() || sched.opacity_reset_interval <= 0) return false;
  if (iter < sched.start_iter || iter >= sched.stop_iter || iter % sched.opacity_reset_interval != 0) return false;
  const double cap = logit(0.01);
  for (std::size_t i = 0; i < gs.size(); ++i) gs.opacity_logit(i) = std::min(gs.opacity_logit(i), cap);
  if (moments) {
    for (double& v : moments->m.column(ParamGroup::opacity)) v = 0;
    for (double& v : moments->v.column(ParamGroup::opacity)) v = 0;
  }
  return true;
}

}  // namespace rsplat
