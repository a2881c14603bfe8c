#include "rsplat/synth_data.hpp"

#include "json_util.hpp"
#include "rsplat/png_io.hpp"
#include "rsplat/rasterizer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace rsplat {

using detail::json;

std::vector<const DatasetView*> Dataset::train_views() const {
  std::vector<const DatasetView*> out;
  for (const auto& v : views)
    if (v.train) out.push_back(&v);
  return out;
}

std::vector<const DatasetView*> Dataset::test_views() const {
  std::vector<const DatasetView*> out;
  for (const auto& v : views)
    if (!v.train) out.push_back(&v);
  return out;
}

Image apply_illumination(const Image& img, const Affine3& a) {
  Image out = img;
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = p * img.channels + c;
      out.data[i] = to_byte(a.alpha[c] * img.data[i] + a.beta[c]) / 255.0;
    }
  return out;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

GaussianSet make_ground_truth(const SyntheticSceneSpec& s, std::mt19937_64& rng) {
  GaussianSet gs(s.sh_degree, 0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int k = sh_coeff_count(s.sh_degree);
  for (int i = 0; i < s.num_gaussians; ++i) {
    Gaussian3D g;
    Vec3 p;
    do {
      p = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    } while (p.norm() > 1.0);
    g.position = 0.85 * s.extent * p;
    Vec4 q(n01(rng), n01(rng), n01(rng), n01(rng));
    g.rotation = q.normalized();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(s.extent * uniform(rng, 0.06, 0.16));
    g.opacity_logit = logit(uniform(rng, 0.5, 0.95));
    const Vec3 x = g.position / s.extent;
    // earthy, spatially smooth albedo
    Vec3 c(0.52 + 0.22 * std::sin(2.1 * x[0] + 0.3), 0.42 + 0.18 * std::sin(1.7 * x[1] + 1.1),
           0.30 + 0.14 * std::sin(2.5 * x[2] + 2.0));
    for (int a = 0; a < 3; ++a) c[a] += 0.03 * n01(rng);
    g.sh_coeffs.assign(k, Vec3::Zero());
    g.sh_coeffs[0] = (c - Vec3::Constant(0.5)) / kShC0;
    for (int j = 1; j < k; ++j) g.sh_coeffs[j] = 0.05 * Vec3(n01(rng), n01(rng), n01(rng));
    gs.push_back(g);
  }
  return gs;
}

std::vector<Camera> make_cameras(const SyntheticSceneSpec& s, std::mt19937_64& rng) {
  const int n = s.num_train + s.num_test;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double phase = uniform(rng, 0, 2 * std::numbers::pi);
  std::vector<Camera> cams;
  for (int k = 0; k < n; ++k) {
    const double sin_el = 0.25 + 0.6 * (k + 0.5) / n;
    const double cos_el = std::sqrt(1 - sin_el * sin_el);
    const double az = phase + k * golden;
    const Vec3 eye = s.camera_distance * Vec3(cos_el * std::cos(az), cos_el * std::sin(az), sin_el);
    cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3(0, 0, 1), s.width, s.height,
                                   s.fov_x_deg * std::numbers::pi / 180.0));
  }
  return cams;
}

std::vector<char> test_flags(int n, int num_test) {
  std::vector<char> is_test(n, 0);
  for (int j = 0; j < num_test; ++j) is_test[static_cast<int>((j + 0.5) * n / num_test)] = 1;
  return is_test;
}

const std::array<Vec3, 6> kPalette = {Vec3(0.92, 0.08, 0.10), Vec3(0.10, 0.85, 0.20), Vec3(0.15, 0.25, 0.95),
                                      Vec3(0.95, 0.90, 0.10), Vec3(0.90, 0.10, 0.85), Vec3(0.10, 0.90, 0.90)};

/// Composites sprites over `img` in place and returns the coverage map.
std::vector<char> add_transients(Image& img, const TransientSpec& t, std::mt19937_64& rng) {
  const int w = img.width, h = img.height;
  std::vector<char> covered(img.pixel_count(), 0);
  for (int s = 0; s < t.count_per_image; ++s) {
    const int sw = std::uniform_int_distribution<int>(t.min_size, t.max_size)(rng);
    const int sh = std::uniform_int_distribution<int>(t.min_size, t.max_size)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, std::max(0, w - sw))(rng);
    const int y0 = std::uniform_int_distribution<int>(0, std::max(0, h - sh))(rng);
    const bool ellipse = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    Vec3 color = kPalette[std::uniform_int_distribution<int>(0, kPalette.size() - 1)(rng)];
    for (int c = 0; c < 3; ++c) color[c] = std::clamp(color[c] + uniform(rng, -0.05, 0.05), 0.0, 1.0);
    if (t.shadow_blob) {
      const double bx = x0 + sw * 0.5 + uniform(rng, -sw, sw), by = y0 + sh + uniform(rng, 0, sh * 0.5);
      const double r = 0.6 * std::max(sw, sh);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double d2 = ((x + 0.5 - bx) * (x + 0.5 - bx) + (y + 0.5 - by) * (y + 0.5 - by)) / (r * r);
          const double k = std::exp(-2.0 * d2);
          if (k < 0.05) continue;
          covered[y * w + x] = 1;
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_byte(img.at(x, y, c) * (1 - 0.5 * k)) / 255.0;
        }
    }
    for (int y = y0; y < std::min(h, y0 + sh); ++y)
      for (int x = x0; x < std::min(w, x0 + sw); ++x) {
        if (ellipse) {
          const double u = (x + 0.5 - x0 - sw * 0.5) / (sw * 0.5), v = (y + 0.5 - y0 - sh * 0.5) / (sh * 0.5);
          if (u * u + v * v > 1.0) continue;
        }
        covered[y * w + x] = 1;
        // mild vertical shading so sprites are not perfectly flat
        const double shade = 1.0 - 0.15 * (y - y0) / std::max(1, sh - 1);
        for (int c = 0; c < 3; ++c)
          img.at(x, y, c) =
              to_byte(t.opacity * color[c] * shade + (1 - t.opacity) * img.at(x, y, c)) / 255.0;
      }
  }
  return covered;
}

}  // namespace

SyntheticScene generate_scene(const SyntheticSceneSpec& s) {
  if (s.num_gaussians < 1 || s.num_train < 1 || s.num_test < 0 || s.width < 8 || s.height < 8)
    throw ConfigError("synthetic spec: counts and image size out of range");
  if (s.transients.count_per_image < 0 || s.transients.min_size < 1 || s.transients.max_size < s.transients.min_size)
    throw ConfigError("synthetic spec: bad transient spec");
  if (!(s.init_fraction > 0 && s.init_fraction <= 1)) throw ConfigError("synthetic spec: init_fraction must be in (0, 1]");
  std::mt19937_64 master(s.seed);
  std::mt19937_64 scene_rng(master()), cam_rng(master()), transient_rng(master()), illum_rng(master()),
      init_rng(master());

  SyntheticScene out;
  out.ground_truth = make_ground_truth(s, scene_rng);
  const auto cams = make_cameras(s, cam_rng);
  const auto is_test = test_flags(static_cast<int>(cams.size()), s.num_test);
  Dataset& ds = out.dataset;
  ds.has_masks = s.transients.count_per_image > 0;
  ds.has_illumination = s.illumination.enabled;
  int train_i = 0, test_i = 0;
  PatchDescriptorExtractor extractor(s.feature_patch);
  for (std::size_t k = 0; k < cams.size(); ++k) {
    DatasetView v;
    v.id = static_cast<int>(k);
    v.train = !is_test[k];
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03d", v.train ? "train" : "test", v.train ? train_i++ : test_i++);
    v.name = name;
    v.cam = cams[k];
    const Image clean = quantize8(render(out.ground_truth, v.cam).image);
    Image img = clean;
    v.oracle_mask = Image(s.width, s.height, 1, 1.0);
    if (v.train && s.transients.count_per_image > 0) {
      const auto covered = add_transients(img, s.transients, transient_rng);
      for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        bool differs = false;
        for (int c = 0; c < 3; ++c) differs = differs || img.data[p * 3 + c] != clean.data[p * 3 + c];
        if (covered[p] && differs) v.oracle_mask.data[p] = 0.0;
      }
    }
    if (s.illumination.enabled) {
      const auto& il = s.illumination;
      for (int c = 0; c < 3; ++c) {
        v.illum.alpha[c] = uniform(illum_rng, il.alpha_min, il.alpha_max);
        v.illum.beta[c] = uniform(illum_rng, il.beta_min, il.beta_max);
      }
      img = apply_illumination(img, v.illum);
    }
    v.image = std::move(img);
    if (s.write_features && v.train) v.features = extractor.extract(v.image);
    out.clean.push_back(clean);
    ds.views.push_back(std::move(v));
  }

  // initial points: a noisy subsample of the ground-truth centers with their base colors
  std::vector<std::size_t> idx(out.ground_truth.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), init_rng);
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s.init_fraction * idx.size())));
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::normal_distribution<double> noise(0.0, s.init_noise * s.extent);
  for (std::size_t i : idx) {
    const Vec3 p = out.ground_truth.position(i);
    ds.points.positions.push_back(p + Vec3(noise(init_rng), noise(init_rng), noise(init_rng)));
    ds.points.colors.push_back((kShC0 * Vec3(out.ground_truth.sh(i, 0)) + Vec3::Constant(0.5)).cwiseMax(0.0).cwiseMin(1.0));
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError(p.string() + ": cannot open for writing");
  os << s;
  if (!os) throw IoError(p.string() + ": write failed");
}

json read_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError(p.string() + ": cannot open");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw IoError(p.string() + ": malformed JSON: " + e.what());
  }
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ds.has_masks) fs::create_directories(dir / "oracle_masks", ec);
  const bool feats = std::any_of(ds.views.begin(), ds.views.end(), [](const auto& v) { return v.features.has_value(); });
  if (feats) fs::create_directories(dir / "features", ec);
  if (ec) throw IoError(dir.string() + ": cannot create dataset directories: " + ec.message());

  json cams = json::array();
  json illum = json::array();
  for (const auto& v : ds.views) {
    const Camera& c = v.cam;
    json r = json::array();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.push_back(c.rotation(i, j));
    json jv = {{"id", v.id},
               {"name", v.name},
               {"split", v.train ? "train" : "test"},
               {"fx", c.fx},
               {"fy", c.fy},
               {"cx", c.cx},
               {"cy", c.cy},
               {"width", c.width},
               {"height", c.height},
               {"rotation", r},
               {"translation", detail::vec_json(c.translation)},
               {"near", c.near},
               {"far", c.far},
               {"image", "images/" + v.name + ".png"}};
    write_png(dir / "images" / (v.name + ".png"), v.image);
    if (ds.has_masks) {
      jv["mask"] = "oracle_masks/" + v.name + ".png";
      write_png(dir / "oracle_masks" / (v.name + ".png"), v.oracle_mask);
    }
    if (v.features) {
      jv["features"] = "features/" + v.name + ".splf";
      save_splf(dir / "features" / (v.name + ".splf"), *v.features);
    }
    cams.push_back(jv);
    illum.push_back({{"name", v.name}, {"alpha", detail::vec_json(v.illum.alpha)}, {"beta", detail::vec_json(v.illum.beta)}});
  }
  write_text(dir / "cameras.json", json({{"views", cams}}).dump(1) + "\n");
  if (ds.has_illumination) write_text(dir / "oracle_illum.json", json({{"views", illum}}).dump(1) + "\n");
  json pos = json::array(), col = json::array();
  for (std::size_t i = 0; i < ds.points.positions.size(); ++i) {
    pos.push_back(detail::vec_json(ds.points.positions[i]));
    col.push_back(detail::vec_json(ds.points.colors[i]));
  }
  write_text(dir / "points_init.json", json({{"positions", pos}, {"colors", col}}).dump(1) + "\n");
}

Dataset generate(const SyntheticSceneSpec& spec, const std::filesystem::path& dir) {
  SyntheticScene s = generate_scene(spec);
  write_dataset(s.dataset, dir);
  write_text(dir / "spec.json", spec_to_json(spec) + "\n");
  return std::move(s.dataset);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string() + ": dataset directory not found");
  const fs::path cam_path = dir / "cameras.json";
  const json cj = read_json(cam_path);
  Dataset ds;
  std::set<std::string> names;
  try {
    for (const auto& jv : cj.at("views")) {
      DatasetView v;
      v.id = jv.at("id").get<int>();
      v.name = jv.at("name").get<std::string>();
      const std::string split = jv.at("split").get<std::string>();
      if (split != "train" && split != "test") throw IoError(cam_path.string() + ": view " + v.name + ": bad split");
      v.train = split == "train";
      Camera& c = v.cam;
      c.fx = jv.at("fx").get<double>();
      c.fy = jv.at("fy").get<double>();
      c.cx = jv.at("cx").get<double>();
      c.cy = jv.at("cy").get<double>();
      c.width = jv.at("width").get<int>();
      c.height = jv.at("height").get<int>();
      const auto& r = jv.at("rotation");
      if (r.size() != 9) throw IoError(cam_path.string() + ": view " + v.name + ": rotation needs 9 values");
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c.rotation(i, j) = r[3 * i + j].get<double>();
      c.translation = detail::json_vec3(jv.at("translation"), v.name);
      c.near = jv.at("near").get<double>();
      c.far = jv.at("far").get<double>();
      try {
        c.validate();
      } catch (const ContractError& e) {
        throw IoError(cam_path.string() + ": view " + v.name + ": " + e.what());
      }
      const fs::path img = dir / jv.at("image").get<std::string>();
      if (!fs::exists(img)) throw IoError(img.string() + ": image for view " + v.name + " is missing");
      v.image = read_png(img);
      if (v.image.channels != 3 || v.image.width != c.width || v.image.height != c.height)
        throw IoError(img.string() + ": view " + v.name + ": image size does not match camera");
      v.oracle_mask = Image(c.width, c.height, 1, 1.0);
      if (jv.contains("mask")) {
        const fs::path mp = dir / jv.at("mask").get<std::string>();
        if (fs::exists(mp)) {
          Image m = read_png(mp);
          if (m.channels != 1 || m.width != c.width || m.height != c.height)
            throw IoError(mp.string() + ": view " + v.name + ": mask size does not match camera");
          for (double& x : m.data) x = x >= 0.5 ? 1.0 : 0.0;
          v.oracle_mask = std::move(m);
          ds.has_masks = true;
        }
      }
      if (jv.contains("features")) {
        const fs::path fp = dir / jv.at("features").get<std::string>();
        if (fs::exists(fp)) v.features = load_splf(fp);
      }
      if (!names.insert(v.name).second) throw IoError(cam_path.string() + ": duplicate view " + v.name);
      ds.views.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw IoError(cam_path.string() + ": " + e.what());
  }
  if (fs::is_directory(dir / "images"))
    for (const auto& e : fs::directory_iterator(dir / "images")) {
      if (e.path().extension() != ".png") continue;
      const std::string stem = e.path().stem().string();
      if (!names.count(stem)) throw IoError(e.path().string() + ": image has no camera (view " + stem + ")");
    }

  const fs::path ip = dir / "oracle_illum.json";
  if (fs::exists(ip)) {
    const json ij = read_json(ip);
    try {
      for (const auto& jv : ij.at("views")) {
        const std::string n = jv.at("name").get<std::string>();
        auto it = std::find_if(ds.views.begin(), ds.views.end(), [&](const auto& v) { return v.name == n; });
        if (it == ds.views.end()) throw IoError(ip.string() + ": unknown view " + n);
        it->illum.alpha = detail::json_vec3(jv.at("alpha"), n);
        it->illum.beta = detail::json_vec3(jv.at("beta"), n);
      }
    } catch (const json::exception& e) {
      throw IoError(ip.string() + ": " + e.what());
    }
    ds.has_illumination = true;
  }

  const fs::path pp = dir / "points_init.json";
  const json pj = read_json(pp);
  try {
    for (const auto& p : pj.at("positions")) ds.points.positions.push_back(detail::json_vec3(p, pp.string()));
    for (const auto& c : pj.at("colors")) ds.points.colors.push_back(detail::json_vec3(c, pp.string()));
  } catch (const json::exception& e) {
    throw IoError(pp.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
  if (ds.points.positions.size() != ds.points.colors.size() || ds.points.positions.empty())
    throw IoError(pp.string() + ": positions and colors must be nonempty and equally long");
  if (ds.train_views().empty()) throw IoError(cam_path.string() + ": no training views");
  return ds;
}

SyntheticSceneSpec spec_from_json_file(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  SyntheticSceneSpec s;
  detail::StrictObject o(j, path.filename().string());
  s.seed = o.get<std::uint64_t>("seed", s.seed);
  s.num_gaussians = o.get<int>("num_gaussians", s.num_gaussians);
  s.extent = o.get<double>("extent_world", s.extent);
  s.sh_degree = o.get<int>("sh_degree", s.sh_degree);
  s.num_train = o.get<int>("num_train", s.num_train);
  s.num_test = o.get<int>("num_test", s.num_test);
  s.width = o.get<int>("width_px", s.width);
  s.height = o.get<int>("height_px", s.height);
  s.fov_x_deg = o.get<double>("fov_x_deg", s.fov_x_deg);
  s.camera_distance = o.get<double>("camera_distance_world", s.camera_distance);
  {
    auto t = o.child("transients");
    s.transients.count_per_image = t.get<int>("count_per_image", s.transients.count_per_image);
    s.transients.min_size = t.get<int>("min_size_px", s.transients.min_size);
    s.transients.max_size = t.get<int>("max_size_px", s.transients.max_size);
    s.transients.opacity = t.get<double>("opacity", s.transients.opacity);
    s.transients.shadow_blob = t.get<bool>("shadow_blob", s.transients.shadow_blob);
    t.finish();
  }
  {
    auto il = o.child("illumination");
    s.illumination.enabled = il.get<bool>("enabled", s.illumination.enabled);
    s.illumination.alpha_min = il.get<double>("alpha_min", s.illumination.alpha_min);
    s.illumination.alpha_max = il.get<double>("alpha_max", s.illumination.alpha_max);
    s.illumination.beta_min = il.get<double>("beta_min", s.illumination.beta_min);
    s.illumination.beta_max = il.get<double>("beta_max", s.illumination.beta_max);
    il.finish();
  }
  s.init_fraction = o.get<double>("init_fraction", s.init_fraction);
  s.init_noise = o.get<double>("init_noise_extent_frac", s.init_noise);
  s.write_features = o.get<bool>("write_features", s.write_features);
  s.feature_patch = o.get<int>("feature_patch_px", s.feature_patch);
  o.finish();
  return s;
}

std::string spec_to_json(const SyntheticSceneSpec& s) {
  json j = {{"seed", s.seed},
            {"num_gaussians", s.num_gaussians},
            {"extent_world", s.extent},
            {"sh_degree", s.sh_degree},
            {"num_train", s.num_train},
            {"num_test", s.num_test},
            {"width_px", s.width},
            {"height_px", s.height},
            {"fov_x_deg", s.fov_x_deg},
            {"camera_distance_world", s.camera_distance},
            {"transients",
             {{"count_per_image", s.transients.count_per_image},
              {"min_size_px", s.transients.min_size},
              {"max_size_px", s.transients.max_size},
              {"opacity", s.transients.opacity},
              {"shadow_blob", s.transients.shadow_blob}}},
            {"illumination",
             {{"enabled", s.illumination.enabled},
              {"alpha_min", s.illumination.alpha_min},
              {"alpha_max", s.illumination.alpha_max},
              {"beta_min", s.illumination.beta_min},
              {"beta_max", s.illumination.beta_max}}},
            {"init_fraction", s.init_fraction},
            {"init_noise_extent_frac", s.init_noise},
            {"write_features", s.write_features},
            {"feature_patch_px", s.feature_patch}};
  return j.dump(2);
}

}  // namespace rsplat
