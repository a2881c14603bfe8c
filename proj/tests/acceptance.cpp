// Acceptance runner: prints one PASS/FAIL line per criterion and exits nonzero if any fails.
#include "rsplat/run.hpp"
#include "test_support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

using namespace rsplat;
namespace fs = std::filesystem;

namespace {

// Gates frozen from the three-seed calibration (mean margin - 2 sd over seeds 1..3, rounded down), never
// below the declared minimums. See README for the observed margins.
constexpr double kRobustOverBaselineDb = 2.0;   // calibrated 1.69
constexpr double kOverMaskDb = 3.06;
constexpr double kOverMaskDgDb = -0.07;         // declared -0.15
constexpr double kOverMaskMbDb = 2.33;
constexpr double kMinTransientIou = 0.64;       // declared 0.6
constexpr double kMinCleanStaticFraction = 0.98;
constexpr double kCleanPsnrBandDb = 0.5;
constexpr double kPlusOverRobustDb = 9.98;      // declared 2.0
constexpr double kPlusOverNoDgDb = -0.15;       // calibrated -0.67

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "" : "FAILED ") + what);
  }
};

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError(p.string() + ": cannot open");
  std::string line;
  std::getline(is, line);
  std::vector<std::string> header;
  for (std::stringstream ss(line); std::getline(ss, line, ',');) header.push_back(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(is, line)) {
    std::map<std::string, std::string> row;
    std::stringstream ss(line);
    std::string cell;
    for (const auto& h : header) {
      if (!std::getline(ss, cell, ',')) cell.clear();
      row[h] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << v;
  return os.str();
}

RunOptions into(const fs::path& dir) {
  RunOptions o;
  o.out_dir = dir;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

struct Run {
  RunConfig cfg;
  fs::path dir;
  RunSummary summary;
};

class Workspace {
 public:
  Workspace(fs::path root, std::uint64_t seed) : root_(std::move(root)), seed_(seed) {}

  fs::path dataset(const std::string& name) {
    const fs::path d = root_ / ("ds_" + name);
    if (made_.insert(name).second) {
      SyntheticSceneSpec s;
      s.seed = seed_;
      if (name == "contaminated") s.transients.count_per_image = 3;
      if (name == "illumination") s.illumination.enabled = true;
      fs::remove_all(d);
      generate(s, d);
    }
    return d;
  }

  RunConfig config(Mode mode, const std::string& ds) {
    RunConfig c;
    c.mode = mode;
    c.seed = seed_;
    c.dataset_dir = dataset(ds).string();
    return c;
  }

  const Run& train(const std::string& name, RunConfig cfg) {
    auto it = runs_.find(name);
    if (it != runs_.end()) return it->second;
    cfg.validate();
    Run r{cfg, root_ / ("run_" + name), {}};
    fs::remove_all(r.dir);
    const auto t0 = Clock::now();
    std::cerr << "[acceptance] training " << name << " ..." << std::flush;
    r.summary = run_training(cfg, into(r.dir));
    std::cerr << " " << fmt(seconds_since(t0), 1) << " s, test psnr " << fmt(r.summary.test.mean_psnr) << ", count "
              << r.summary.final_count << "\n";
    return runs_.emplace(name, std::move(r)).first->second;
  }

  const std::map<std::string, Run>& runs() const { return runs_; }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::uint64_t seed_;
  std::set<std::string> made_;
  std::map<std::string, Run> runs_;
};

RunConfig with_toggles(RunConfig c, Toggles t) {
  c.toggles = t;
  return c;
}

// 1. analytic gradients against central differences
Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  RasterSettings smooth;
  smooth.alpha_min = 1e-10;
  rsplat::testing::FdStats deflt, soft, appearance, mlps;
  for (int scene = 0; scene < 50; ++scene) {
    const int n = 1 + scene % 10;
    deflt.merge(rsplat::testing::raster_fd_check(rng, n, RasterSettings{}, false).total());
    soft.merge(rsplat::testing::raster_fd_check(rng, n, smooth, false).total());
    appearance.merge(rsplat::testing::raster_fd_check(rng, n, smooth, true).total());
    if (scene % 10 == 0) {
      SmallMlp mask = make_mask_mlp(18, 64);
      mask.init_uniform(rng);
      SmallMlp aff = make_affine_mlp(31, 128);
      aff.init_uniform(rng);
      mlps.merge(rsplat::testing::mlp_fd_check(mask, rng, 4));
      mlps.merge(rsplat::testing::mlp_fd_check(aff, rng, 4));
    }
  }
  const double secs = seconds_since(t0);
  auto report = [&](const char* name, const rsplat::testing::FdStats& s) {
    v.check(s.worst < 1e-3 && s.checked > 0, std::string(name) + " max rel err " + sci(s.worst) + " over " +
                                                 std::to_string(s.checked) + " coords, " +
                                                 std::to_string(s.screened) + " screened at kinks");
  };
  report("raster defaults", deflt);
  report("raster smooth", soft);
  report("raster+appearance", appearance);
  report("mlp", mlps);
  v.check(soft.screened == 0 && appearance.screened == 0, "no kinks screened with smooth settings");
  v.check(secs < 60, "runtime " + fmt(secs, 1) + " s < 60 s");
  return v;
}

// 2. compositing invariants
Verdict blending() {
  Verdict v;
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> ux(0, 31), uy(0, 23);
  const Camera cam = rsplat::testing::small_camera(32, 24);
  double worst_sum = 0;
  bool monotone = true, matches = true;
  for (int k = 0; k < 1000; ++k) {
    const GaussianSet gs = rsplat::testing::random_scene(rng, 10);
    const auto splats = project(gs, cam);
    const RenderOutput out = render(gs, cam);
    const int x = ux(rng), y = uy(rng);
    const auto t = rsplat::testing::blend_pixel(splats, x, y);
    double sum = 0;
    for (double w : t.weights) sum += w;
    worst_sum = std::max(worst_sum, sum);
    for (std::size_t i = 1; i < t.transmittance.size(); ++i) monotone = monotone && t.transmittance[i] <= t.transmittance[i - 1];
    matches = matches && std::abs(out.alpha_map.at(x, y) - sum) < 1e-12;
  }
  v.check(worst_sum <= 1 + 1e-12, "max sum of weights " + fmt(worst_sum, 12) + " <= 1 + 1e-12 over 1000 pixels");
  v.check(monotone, "transmittance nonincreasing");
  v.check(matches, "renderer alpha equals the independent blend");
  const Camera c16 = rsplat::testing::small_camera(16, 16);
  const RenderOutput two = render(rsplat::testing::two_splat_scene(c16), c16);
  const Vec3 px(two.image.at(8, 8, 0), two.image.at(8, 8, 1), two.image.at(8, 8, 2));
  v.check((px - Vec3(0.5, 0.25, 0)).norm() < 1e-9,
          "two-splat pixel (" + fmt(px.x(), 6) + ", " + fmt(px.y(), 6) + ", " + fmt(px.z(), 6) + ")");
  return v;
}

// 3. cosine mapping and regularizer decay
Verdict exactness() {
  Verdict v;
  double worst_map = 0, worst_decay = 0;
  for (int k = 0; k <= 2000; ++k) {
    const double c = -1.0 + k / 1000.0;
    worst_map = std::max(worst_map, std::abs(cosine_to_target(c) - (c <= 0.5 ? 0.0 : 2 * c - 1)));
  }
  FeatureMap a, b;
  a.grid_w = b.grid_w = 3;
  a.grid_h = b.grid_h = 1;
  a.channels = b.channels = 2;
  a.data = {1, 0, 1, 0, 1, 0};
  b.data = {1, 0, 0.5, std::sqrt(0.75), 0, 1};  // cos 1, 0.5, 0
  const auto t = cosine_target(a, b);
  v.check(worst_map <= 1e-12, "cosine map grid max error " + sci(worst_map));
  v.check(std::abs(t[0] - 1) <= 1e-12 && std::abs(t[1]) <= 1e-12 && t[2] == 0.0, "cos 1 -> 1, cos 0.5 -> 0, cos 0 -> 0");
  std::mt19937_64 rng(5);
  const Image m = rsplat::testing::random_image(rng, 16, 8, 1, 0, 1);
  const double beta = 200;
  const double l0 = loss_reg(m, 0, beta).value;
  double mean_one_minus = 0;
  for (double x : m.data) mean_one_minus += 1 - x;
  mean_one_minus /= m.data.size();
  for (long i = 0; i <= 3000; i += 7) worst_decay = std::max(worst_decay, std::abs(loss_reg(m, i, beta).value / l0 - std::exp(-i / beta)));
  v.check(std::abs(l0 - mean_one_minus) <= 1e-12, "weight 1 at iteration 0");
  v.check(worst_decay <= 1e-12, "decay ratio max error " + sci(worst_decay));
  return v;
}

long densify_start_of(const RunConfig& c) { return c.effective_densify_start(); }

// 4. delayed growth holds the count; an infinite threshold freezes it
Verdict delayed_growth(Workspace& ws) {
  Verdict v;
  RunConfig inf = ws.config(Mode::baseline, "contaminated");
  inf.grad_threshold = std::numeric_limits<double>::infinity();
  const Run& frozen = ws.train("infinite_threshold", inf);
  const Run& base = ws.train("contaminated_baseline", ws.config(Mode::baseline, "contaminated"));
  std::size_t runs_checked = 0;
  for (const auto& [name, r] : ws.runs()) {
    const long s = densify_start_of(r.cfg);
    const bool infinite = std::isinf(r.cfg.grad_threshold);
    bool held = true;
    for (const auto& row : read_csv(r.dir / "steps.csv")) {
      const long it = std::stol(row.at("iter"));
      if ((it < s || infinite) && std::stoul(row.at("gaussian_count")) != r.summary.initial_count) held = false;
    }
    if (infinite) held = held && r.summary.final_count == r.summary.initial_count;
    v.check(held, name + ": count " + std::to_string(r.summary.initial_count) + " held " +
                      (infinite ? "for the whole run" : "before iteration " + std::to_string(s)));
    ++runs_checked;
  }
  v.check(runs_checked >= 2, std::to_string(runs_checked) + " runs inspected");
  v.check(frozen.summary.test.mean_psnr >= base.summary.test.mean_psnr,
          "no-densification test psnr " + fmt(frozen.summary.test.mean_psnr) + " >= contaminated baseline " +
              fmt(base.summary.test.mean_psnr));
  return v;
}

// 5. component ablation on the contaminated scene
Verdict ablation(Workspace& ws) {
  Verdict v;
  const RunConfig rs_cfg = ws.config(Mode::robustsplat, "contaminated");
  const double rs = ws.train("contaminated_robustsplat", rs_cfg).summary.test.mean_psnr;
  const double base = ws.train("contaminated_baseline", ws.config(Mode::baseline, "contaminated")).summary.test.mean_psnr;
  // the "3DGS+X" rows keep the early mask regularizer on, as it is part of the mask component here
  const double mask = ws.train("contaminated_mask", with_toggles(rs_cfg, {true, false, false, true, false})).summary.test.mean_psnr;
  const double mask_dg = ws.train("contaminated_mask_dg", with_toggles(rs_cfg, {true, true, false, true, false})).summary.test.mean_psnr;
  const double mask_mb = ws.train("contaminated_mask_mb", with_toggles(rs_cfg, {true, false, true, true, false})).summary.test.mean_psnr;
  v.check(rs - base >= kRobustOverBaselineDb,
          "robustsplat " + fmt(rs) + " - baseline " + fmt(base) + " = " + fmt(rs - base) + " dB >= " + fmt(kRobustOverBaselineDb, 2));
  for (auto [name, other, gate] : {std::tuple{"3dgs+mask", mask, kOverMaskDb}, {"3dgs+mask+dg", mask_dg, kOverMaskDgDb},
                                    {"3dgs+mask+mb", mask_mb, kOverMaskMbDb}})
    v.check(rs - other >= gate, std::string("robustsplat - ") + name + " (" + fmt(other) + ") = " + fmt(rs - other) +
                                    " dB >= " + fmt(gate, 2));
  return v;
}

// 6. learned mask against the oracle, and behaviour on clean data
Verdict mask_quality(Workspace& ws) {
  Verdict v;
  const Run& rs = ws.train("contaminated_robustsplat", ws.config(Mode::robustsplat, "contaminated"));
  const double iou = rs.summary.train.mean_iou_transient.value_or(0.0);
  v.check(iou >= kMinTransientIou, "transient IoU " + fmt(iou) + " >= " + fmt(kMinTransientIou, 2));
  const Run& clean_rs = ws.train("clean_robustsplat", ws.config(Mode::robustsplat, "clean"));
  const Run& clean_base = ws.train("clean_baseline", ws.config(Mode::baseline, "clean"));
  const double frac = clean_rs.summary.train.mean_static_fraction.value_or(0.0);
  v.check(frac >= kMinCleanStaticFraction, "clean static fraction " + fmt(frac, 4) + " >= " + fmt(kMinCleanStaticFraction, 2));
  const double d = clean_rs.summary.test.mean_psnr - clean_base.summary.test.mean_psnr;
  v.check(std::abs(d) <= kCleanPsnrBandDb, "clean psnr robustsplat " + fmt(clean_rs.summary.test.mean_psnr) + " vs baseline " +
                                               fmt(clean_base.summary.test.mean_psnr) + " (|" + fmt(d) + "| <= " +
                                               fmt(kCleanPsnrBandDb, 2) + " dB)");
  return v;
}

// 7. appearance modeling under per-image illumination
Verdict illumination(Workspace& ws) {
  Verdict v;
  RunConfig rs_cfg = ws.config(Mode::robustsplat, "illumination");
  rs_cfg.protocol = EvalProtocol::left_fit_right_eval;
  RunConfig pp_cfg = ws.config(Mode::plusplus, "illumination");
  pp_cfg.protocol = EvalProtocol::left_fit_right_eval;
  {
    Trainer t(pp_cfg, load_dataset(pp_cfg.dataset_dir));
    const auto& cam = t.dataset().train_views().front()->cam;
    const RenderOutput r = t.render_view(cam, t.image_embeddings().row(0));
    v.check(r.aux_image.data == r.image.data, "iteration 0 affine render bit-equals raw render");
  }
  const double rs = ws.train("illum_robustsplat", rs_cfg).summary.test.mean_psnr;
  pp_cfg.checkpoint_interval = 1000;
  const double pp = ws.train("illum_plusplus", pp_cfg).summary.test.mean_psnr;
  RunConfig nodg = pp_cfg;
  nodg.toggles = Toggles{true, false, true, true, true};
  const double pp_nodg = ws.train("illum_plusplus_nodg", nodg).summary.test.mean_psnr;
  v.check(pp - rs >= kPlusOverRobustDb, "right-half psnr plusplus " + fmt(pp) + " - robustsplat " + fmt(rs) + " = " +
                                             fmt(pp - rs) + " dB >= " + fmt(kPlusOverRobustDb, 2));
  v.check(pp - pp_nodg >= kPlusOverNoDgDb, "plusplus - plusplus w/o dg (" + fmt(pp_nodg) + ") = " + fmt(pp - pp_nodg) +
                                              " dB >= " + fmt(kPlusOverNoDgDb, 2));
  return v;
}

// Mean |implied - oracle| over train views and channels of the per-view color transform. The implied
// transform is a per-channel line fit of the affine render against the raw render. The raw colors absorb
// an unknown global scale a and offset b (raw ~ a clean + b), which are fitted across views first.
double transform_recovery_error(const Trainer& t) {
  const auto views = t.dataset().train_views();
  std::vector<Vec3> ia(views.size()), ib(views.size());
  for (std::size_t k = 0; k < views.size(); ++k) {
    const RenderOutput r = t.render_view(views[k]->cam, t.image_embeddings().row(static_cast<int>(k)));
    const Image& aff = t.appearance_mlp() ? r.aux_image : r.image;
    for (int c = 0; c < 3; ++c) {
      double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (std::size_t p = 0; p < r.alpha_map.data.size(); ++p) {
        if (r.alpha_map.data[p] < 0.5) continue;
        const double x = r.image.data[p * 3 + c], y = aff.data[p * 3 + c];
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
      }
      const double var = sxx - sx * sx / n;
      ia[k][c] = var > 1e-12 ? (sxy - sx * sy / n) / var : 1.0;
      ib[k][c] = (sy - ia[k][c] * sx) / n;
    }
  }
  double err = 0;
  for (int c = 0; c < 3; ++c) {
    double aa = 0, a_num = 0, b_num = 0;
    for (std::size_t k = 0; k < views.size(); ++k) {
      aa += ia[k][c] * ia[k][c];
      a_num += views[k]->illum.alpha[c] * ia[k][c];
      b_num += ia[k][c] * (views[k]->illum.beta[c] - ib[k][c]);
    }
    const double a = a_num / aa, b = b_num / aa;
    for (std::size_t k = 0; k < views.size(); ++k)
      err += std::abs(a * ia[k][c] - views[k]->illum.alpha[c]) +
             std::abs(ib[k][c] + ia[k][c] * b - views[k]->illum.beta[c]);
  }
  return err / (3.0 * views.size());
}

// Appearance invariant: the implied per-view transform approaches the oracle across checkpoints.
Verdict appearance_recovery(Workspace& ws) {
  Verdict v;
  RunConfig pp_cfg = ws.config(Mode::plusplus, "illumination");
  pp_cfg.protocol = EvalProtocol::left_fit_right_eval;
  pp_cfg.checkpoint_interval = 1000;
  const Run& r = ws.train("illum_plusplus", pp_cfg);
  const Dataset ds = load_dataset(r.cfg.dataset_dir);
  std::vector<std::pair<long, double>> curve;
  {
    Trainer t(r.cfg, ds);
    curve.emplace_back(0, transform_recovery_error(t));
  }
  std::vector<fs::path> ckpts;
  for (const auto& e : fs::directory_iterator(r.dir / "checkpoints")) ckpts.push_back(e.path());
  std::sort(ckpts.begin(), ckpts.end());
  ckpts.push_back(r.dir / "checkpoint.rsck");
  for (const auto& p : ckpts) {
    Trainer t(r.cfg, ds);
    t.load_checkpoint(p);
    curve.emplace_back(t.iteration(), transform_recovery_error(t));
  }
  std::string trace;
  bool monotone = true;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    trace += (i ? ", " : "") + std::to_string(curve[i].first) + ": " + fmt(curve[i].second, 4);
    if (i > 0) monotone = monotone && curve[i].second < curve[i - 1].second;
  }
  v.check(monotone, "transform error decreasing across checkpoints (" + trace + ")");
  v.check(curve.back().second < 0.5 * curve.front().second,
          "final error below half the identity-transform error " + fmt(curve.front().second, 4));
  return v;
}

// 8. supervision resolution schedule, from the logged shapes
Verdict cascade(Workspace& ws) {
  Verdict v;
  const Run& r = ws.train("contaminated_robustsplat", ws.config(Mode::robustsplat, "contaminated"));
  const long s = r.cfg.cascade_schedule().switch_iter;
  const Dataset ds = load_dataset(r.cfg.dataset_dir);
  const int w = ds.views.front().cam.width, h = ds.views.front().cam.height;
  const int lo = r.cfg.low_res_factor, extra = r.cfg.residual_downsample;
  long low_rows = 0, high_rows = 0, bad = 0;
  for (const auto& row : read_csv(r.dir / "supervision.csv")) {
    const long it = std::stol(row.at("iter"));
    const int rw = std::stoi(row.at("render_w")), rh = std::stoi(row.at("render_h"));
    const int resw = std::stoi(row.at("residual_w")), resh = std::stoi(row.at("residual_h"));
    if (it < s) {
      ++low_rows;
      bad += row.at("phase") != "low" || rw != w / lo || rh != h / lo || resw != w / lo / extra || resh != h / lo / extra;
    } else {
      ++high_rows;
      bad += row.at("phase") != "high" || rw != w || rh != h || resw != w || resh != h;
    }
  }
  v.check(low_rows == s && high_rows == r.cfg.total_iters - s,
          std::to_string(low_rows) + " low rows before " + std::to_string(s) + ", " + std::to_string(high_rows) + " high rows after");
  v.check(bad == 0, "low phase renders " + std::to_string(w / lo) + "x" + std::to_string(h / lo) + " with residuals at " +
                        std::to_string(w / lo / extra) + "x" + std::to_string(h / lo / extra) + ", high phase " +
                        std::to_string(w) + "x" + std::to_string(h) + " (" + std::to_string(bad) + " mismatched rows)");
  return v;
}

// 9. reproducibility and resume
Verdict determinism(Workspace& ws) {
  Verdict v;
  for (Mode mode : {Mode::robustsplat, Mode::plusplus}) {
    RunConfig c = ws.config(mode, mode == Mode::plusplus ? "illumination" : "contaminated");
    c.total_iters = 300;
    c.eval_interval = 100;
    c.checkpoint_interval = 100;
    c.write_snapshots = false;
    c.validate();
    const std::string tag = mode_name(mode);
    const fs::path a = ws.root() / ("det_a_" + tag), b = ws.root() / ("det_b_" + tag), r = ws.root() / ("det_resume_" + tag);
    for (const auto& d : {a, b, r}) fs::remove_all(d);
    run_training(c, into(a));
    run_training(c, into(b));
    v.check(slurp(a / "metrics.csv") == slurp(b / "metrics.csv") && !slurp(a / "metrics.csv").empty(),
            tag + ": two runs give byte-identical metrics.csv");
    RunOptions first = into(r);
    first.stop_at = 150;
    run_training(c, first);
    RunOptions second = into(r);
    second.resume = r / "checkpoints" / "ckpt_000100.rsck";
    run_training(c, second);
    bool same = true;
    for (const char* f : {"metrics.csv", "steps.csv", "checkpoint.rsck"}) same = same && slurp(a / f) == slurp(r / f);
    v.check(same, tag + ": resume from iteration 100 reproduces metrics, step log and final checkpoint");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("rsplat acceptance suite");
  std::string work = "acceptance_work";
  std::vector<int> only;
  std::uint64_t seed = 1;
  std::string report;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--report", report, "also write the verdict lines here");
  app.add_option("--only", only, "criteria to run (10 = appearance recovery property)")->delimiter(',');
  app.add_option("--seed", seed, "dataset and training seed");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  Workspace ws(work, seed);
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradients},
      {"blending invariants", blending},
      {"cosine map and regularizer decay exactness", exactness},
      {"delayed-growth contract", [&] { return delayed_growth(ws); }},
      {"ablation direction", [&] { return ablation(ws); }},
      {"mask quality", [&] { return mask_quality(ws); }},
      {"illumination suite", [&] { return illumination(ws); }},
      {"cascade contract", [&] { return cascade(ws); }},
      {"determinism", [&] { return determinism(ws); }},
  };
  // the delayed-growth check inspects every training run, so it goes last
  std::vector<int> order = {1, 2, 3, 5, 6, 7, 8, 9, 4};
  if (!only.empty()) {
    std::erase_if(order, [&](int k) { return std::find(only.begin(), only.end(), k) == only.end(); });
  }
  std::map<int, Verdict> results;
  for (int k : order) {
    const auto t0 = Clock::now();
    try {
      results[k] = criteria[k - 1].second();
    } catch (const std::exception& e) {
      results[k].check(false, std::string("error: ") + e.what());
    }
    std::cerr << "[acceptance] criterion " << k << " done in " << fmt(seconds_since(t0), 1) << " s\n";
  }
  std::optional<Verdict> recovery;
  if (only.empty() || std::find(only.begin(), only.end(), 10) != only.end()) {
    try {
      recovery = appearance_recovery(ws);
    } catch (const std::exception& e) {
      recovery.emplace().check(false, std::string("error: ") + e.what());
    }
  }
  bool all = true;
  std::ostringstream out;
  auto line = [&](const Verdict& v, const std::string& what) {
    all = all && v.pass;
    out << (v.pass ? "PASS" : "FAIL") << " " << what;
    for (std::size_t i = 0; i < v.notes.size(); ++i) out << (i ? "; " : ": ") << v.notes[i];
    out << "\n";
  };
  for (const auto& [k, v] : results)
    line(v, "criterion " + std::to_string(k) + " (" + criteria[k - 1].first + ")");
  if (recovery) line(*recovery, "property (appearance transform recovery)");
  std::cout << out.str();
  if (!report.empty()) std::ofstream(report) << out.str();
  return all ? 0 : 1;
}
