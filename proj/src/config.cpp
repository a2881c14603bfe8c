#include "rsplat/config.hpp"

#include "json_util.hpp"

#include <fstream>
#include <sstream>

namespace rsplat {

using detail::json;

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::baseline: return "3dgs-baseline";
    case Mode::robustsplat: return "robustsplat";
    case Mode::plusplus: return "robustsplat-plusplus";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "3dgs-baseline" || s == "baseline") return Mode::baseline;
  if (s == "robustsplat") return Mode::robustsplat;
  if (s == "robustsplat-plusplus" || s == "plusplus") return Mode::plusplus;
  throw ConfigError("unknown mode '" + s + "' (expected 3dgs-baseline, robustsplat or robustsplat-plusplus)");
}

Toggles Toggles::for_mode(Mode m) {
  Toggles t;
  if (m == Mode::baseline) return t;
  t.mask = t.dg = t.mb = t.mr = true;
  t.appearance = m == Mode::plusplus;
  return t;
}

const char* protocol_name(EvalProtocol p) { return p == EvalProtocol::full ? "full" : "left-fit-right-eval"; }

EvalProtocol parse_protocol(const std::string& s) {
  if (s == "full") return EvalProtocol::full;
  if (s == "left-fit-right-eval") return EvalProtocol::left_fit_right_eval;
  throw ConfigError("unknown protocol '" + s + "' (expected full or left-fit-right-eval)");
}

long RunConfig::effective_densify_start() const {
  if (densify_start_iter) return *densify_start_iter;
  return effective_toggles().dg ? std::max(1L, total_iters / 3) : std::max(1L, total_iters / 60);
}

long RunConfig::effective_densify_stop() const {
  return densify_stop_iter.value_or(std::max(effective_densify_start() + 1, total_iters / 2));
}

double RunConfig::effective_beta_reg() const {
  return beta_reg_iters.value_or(std::max(1.0, static_cast<double>(total_iters) / 15.0));
}

long RunConfig::effective_opacity_reset_interval() const { return opacity_reset_interval.value_or(total_iters / 3); }

DensifySchedule RunConfig::densify_schedule() const {
  DensifySchedule s;
  s.start_iter = effective_densify_start();
  s.stop_iter = effective_densify_stop();
  s.interval = densify_interval;
  s.grad_threshold = grad_threshold;
  s.scale_split_threshold = scale_split_extent_frac;
  s.min_opacity = min_opacity;
  s.opacity_reset_interval = effective_opacity_reset_interval();
  s.max_screen_radius_frac = max_screen_radius_diag_frac;
  s.max_world_scale_frac = max_world_scale_extent_frac;
  s.max_gaussians = max_gaussians;
  return s;
}

CascadeSchedule RunConfig::cascade_schedule() const {
  CascadeSchedule c;
  c.switch_iter = effective_toggles().mb ? effective_densify_start() : 0;
  c.low_res_factor = low_res_factor;
  c.residual_downsample = residual_downsample;
  return c;
}

void RunConfig::validate() const {
  if (total_iters < 2) throw ConfigError("total_iters must be >= 2");
  if (sh_degree < 0 || sh_degree > 3) throw ConfigError("sh_degree must be in 0..3");
  if (!(ssim_lambda >= 0 && ssim_lambda <= 1)) throw ConfigError("ssim_lambda must be in [0, 1]");
  densify_schedule().validate(total_iters);
  for (int f : {low_res_factor, residual_downsample})
    if (f != 1 && f != 2 && f != 4 && f != 8) throw ConfigError("cascade factors must be 1, 2, 4 or 8");
  if (mask_hidden < 1) throw ConfigError("mask.hidden must be >= 1");
  if (!(effective_beta_reg() > 0)) throw ConfigError("mask.beta_reg_iters must be positive");
  if (!(residual_rho > 0 && residual_rho <= 1)) throw ConfigError("mask.residual_rho must be in (0, 1]");
  if (feature_patch < 1) throw ConfigError("mask.feature_patch_px must be >= 1");
  if (appearance.image_dim < 1 || appearance.gaussian_dim < 6 * appearance.fourier_bands || appearance.hidden < 1)
    throw ConfigError("appearance: dims must be positive and gaussian_dim >= 6 * fourier_bands");
  if (testtime_steps < 0 || !(testtime_lr > 0)) throw ConfigError("appearance: bad test-time settings");
  if (eval_interval < 0 || checkpoint_interval < 0) throw ConfigError("intervals must be >= 0");
}

namespace {

const char* rule_name(CandidateRule r) { return r == CandidateRule::per_pixel ? "per_pixel" : "per_image"; }

CandidateRule parse_rule(const std::string& s) {
  if (s == "per_pixel") return CandidateRule::per_pixel;
  if (s == "per_image") return CandidateRule::per_image;
  throw ConfigError("mask.candidate_rule must be per_pixel or per_image");
}

template <class T>
void opt_get(detail::StrictObject& o, const std::string& key, std::optional<T>& dst) {
  if (o.has(key)) dst = o.get<T>(key, T{});
  else o.get<T>(key, T{});
}

template <class T>
void opt_put(json& j, const std::string& key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

double parse_threshold(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw ConfigError("densify.grad_threshold: expected a number or \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  detail::StrictObject o(j, "config");
  c.mode = parse_mode(o.get<std::string>("mode", mode_name(c.mode)));
  if (o.has("toggles")) {
    auto t = o.child("toggles");
    Toggles base = Toggles::for_mode(c.mode);
    base.mask = t.get<bool>("mask", base.mask);
    base.dg = t.get<bool>("dg", base.dg);
    base.mb = t.get<bool>("mb", base.mb);
    base.mr = t.get<bool>("mr", base.mr);
    base.appearance = t.get<bool>("appearance", base.appearance);
    t.finish();
    c.toggles = base;
  }
  c.dataset_dir = o.get<std::string>("dataset_dir", c.dataset_dir);
  c.total_iters = o.get<long>("total_iters", c.total_iters);
  c.seed = o.get<std::uint64_t>("seed", c.seed);
  c.sh_degree = o.get<int>("sh_degree", c.sh_degree);
  c.ssim_lambda = o.get<double>("ssim_lambda", c.ssim_lambda);
  {
    auto d = o.child("densify");
    opt_get(d, "start_iter", c.densify_start_iter);
    opt_get(d, "stop_iter", c.densify_stop_iter);
    c.densify_interval = d.get<long>("interval_iters", c.densify_interval);
    if (d.has("grad_threshold")) c.grad_threshold = parse_threshold(d.get<json>("grad_threshold", json()));
    else d.get<json>("grad_threshold", json());
    c.scale_split_extent_frac = d.get<double>("scale_split_extent_frac", c.scale_split_extent_frac);
    c.min_opacity = d.get<double>("min_opacity", c.min_opacity);
    opt_get(d, "opacity_reset_interval_iters", c.opacity_reset_interval);
    c.max_screen_radius_diag_frac = d.get<double>("max_screen_radius_diag_frac", c.max_screen_radius_diag_frac);
    c.max_world_scale_extent_frac = d.get<double>("max_world_scale_extent_frac", c.max_world_scale_extent_frac);
    c.max_gaussians = d.get<std::size_t>("max_gaussians", c.max_gaussians);
    d.finish();
  }
  {
    auto k = o.child("cascade");
    c.low_res_factor = k.get<int>("low_res_factor", c.low_res_factor);
    c.residual_downsample = k.get<int>("residual_downsample", c.residual_downsample);
    k.finish();
  }
  {
    auto m = o.child("mask");
    c.mask_hidden = m.get<int>("hidden", c.mask_hidden);
    c.mask_weights.residual = m.get<double>("lambda_residual", c.mask_weights.residual);
    c.mask_weights.cos = m.get<double>("lambda_cos", c.mask_weights.cos);
    c.mask_weights.reg = m.get<double>("lambda_reg", c.mask_weights.reg);
    opt_get(m, "beta_reg_iters", c.beta_reg_iters);
    c.residual_rho = m.get<double>("residual_rho", c.residual_rho);
    c.feature_patch = m.get<int>("feature_patch_px", c.feature_patch);
    const std::string src = m.get<std::string>("feature_source", "builtin");
    if (src == "builtin") c.feature_source = FeatureSource::builtin;
    else if (src == "file") c.feature_source = FeatureSource::file;
    else throw ConfigError("mask.feature_source must be builtin or file");
    c.candidate_rule = parse_rule(m.get<std::string>("candidate_rule", rule_name(c.candidate_rule)));
    m.finish();
  }
  {
    auto a = o.child("appearance");
    c.appearance.image_dim = a.get<int>("image_dim", c.appearance.image_dim);
    c.appearance.gaussian_dim = a.get<int>("gaussian_dim", c.appearance.gaussian_dim);
    c.appearance.fourier_bands = a.get<int>("fourier_bands", c.appearance.fourier_bands);
    c.appearance.hidden = a.get<int>("hidden", c.appearance.hidden);
    c.appearance.image_init_std = a.get<double>("image_init_std", c.appearance.image_init_std);
    c.testtime_steps = a.get<int>("testtime_steps", c.testtime_steps);
    c.testtime_lr = a.get<double>("testtime_lr", c.testtime_lr);
    a.finish();
  }
  {
    auto l = o.child("lr");
    c.lr.position_init = l.get<double>("position_init_extent_frac", c.lr.position_init);
    c.lr.position_final = l.get<double>("position_final_extent_frac", c.lr.position_final);
    c.lr.opacity = l.get<double>("opacity", c.lr.opacity);
    c.lr.scale = l.get<double>("log_scale", c.lr.scale);
    c.lr.rotation = l.get<double>("rotation", c.lr.rotation);
    c.lr.sh = l.get<double>("sh", c.lr.sh);
    c.lr.mask_mlp = l.get<double>("mask_mlp", c.lr.mask_mlp);
    c.lr.affine_mlp = l.get<double>("affine_mlp", c.lr.affine_mlp);
    c.lr.image_embedding = l.get<double>("image_embedding", c.lr.image_embedding);
    c.lr.gaussian_embedding = l.get<double>("gaussian_embedding", c.lr.gaussian_embedding);
    l.finish();
  }
  c.protocol = parse_protocol(o.get<std::string>("eval_protocol", protocol_name(c.protocol)));
  c.eval_interval = o.get<long>("eval_interval_iters", c.eval_interval);
  c.checkpoint_interval = o.get<long>("checkpoint_interval_iters", c.checkpoint_interval);
  c.write_snapshots = o.get<bool>("write_snapshots", c.write_snapshots);
  o.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["mode"] = mode_name(c.mode);
  if (c.toggles)
    j["toggles"] = {{"mask", c.toggles->mask},
                    {"dg", c.toggles->dg},
                    {"mb", c.toggles->mb},
                    {"mr", c.toggles->mr},
                    {"appearance", c.toggles->appearance}};
  j["dataset_dir"] = c.dataset_dir;
  j["total_iters"] = c.total_iters;
  j["seed"] = c.seed;
  j["sh_degree"] = c.sh_degree;
  j["ssim_lambda"] = c.ssim_lambda;
  json d;
  opt_put(d, "start_iter", c.densify_start_iter);
  opt_put(d, "stop_iter", c.densify_stop_iter);
  d["interval_iters"] = c.densify_interval;
  if (std::isfinite(c.grad_threshold)) d["grad_threshold"] = c.grad_threshold;
  else d["grad_threshold"] = "inf";
  d["scale_split_extent_frac"] = c.scale_split_extent_frac;
  d["min_opacity"] = c.min_opacity;
  opt_put(d, "opacity_reset_interval_iters", c.opacity_reset_interval);
  d["max_screen_radius_diag_frac"] = c.max_screen_radius_diag_frac;
  d["max_world_scale_extent_frac"] = c.max_world_scale_extent_frac;
  d["max_gaussians"] = c.max_gaussians;
  j["densify"] = d;
  j["cascade"] = {{"low_res_factor", c.low_res_factor}, {"residual_downsample", c.residual_downsample}};
  json m = {{"hidden", c.mask_hidden},
            {"lambda_residual", c.mask_weights.residual},
            {"lambda_cos", c.mask_weights.cos},
            {"lambda_reg", c.mask_weights.reg},
            {"residual_rho", c.residual_rho},
            {"feature_patch_px", c.feature_patch},
            {"feature_source", c.feature_source == FeatureSource::builtin ? "builtin" : "file"},
            {"candidate_rule", rule_name(c.candidate_rule)}};
  opt_put(m, "beta_reg_iters", c.beta_reg_iters);
  j["mask"] = m;
  j["appearance"] = {{"image_dim", c.appearance.image_dim},
                     {"gaussian_dim", c.appearance.gaussian_dim},
                     {"fourier_bands", c.appearance.fourier_bands},
                     {"hidden", c.appearance.hidden},
                     {"image_init_std", c.appearance.image_init_std},
                     {"testtime_steps", c.testtime_steps},
                     {"testtime_lr", c.testtime_lr}};
  j["lr"] = {{"position_init_extent_frac", c.lr.position_init},
             {"position_final_extent_frac", c.lr.position_final},
             {"opacity", c.lr.opacity},
             {"log_scale", c.lr.scale},
             {"rotation", c.lr.rotation},
             {"sh", c.lr.sh},
             {"mask_mlp", c.lr.mask_mlp},
             {"affine_mlp", c.lr.affine_mlp},
             {"image_embedding", c.lr.image_embedding},
             {"gaussian_embedding", c.lr.gaussian_embedding}};
  j["eval_protocol"] = protocol_name(c.protocol);
  j["eval_interval_iters"] = c.eval_interval;
  j["checkpoint_interval_iters"] = c.checkpoint_interval;
  j["write_snapshots"] = c.write_snapshots;
  return j.dump(2);
}

}  // namespace rsplat
