#include "rsplat/png_io.hpp"
#include "rsplat/run.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace rsplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void print_summary(const RunSummary& s) {
  std::printf("iterations      %ld\n", s.iterations);
  std::printf("gaussians       %zu -> %zu\n", s.initial_count, s.final_count);
  std::printf("test psnr       %.4f\n", s.test.mean_psnr);
  std::printf("test ssim       %.4f\n", s.test.mean_ssim);
  std::printf("train psnr      %.4f\n", s.train.mean_psnr);
  if (s.train.mean_iou_transient) std::printf("transient iou   %.4f\n", *s.train.mean_iou_transient);
  if (s.train.mean_static_fraction) std::printf("static fraction %.4f\n", *s.train.mean_static_fraction);
  std::printf("wall seconds    %.1f\n", s.wall_seconds);
}

std::string latest_checkpoint(const fs::path& dir) {
  std::string best;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir / "checkpoints", ec))
    if (e.path().extension() == ".rsck") best = std::max(best, e.path().string());
  return best;
}

Image overlay_mask(const Image& gt, const Image& mask) {
  Image out = gt;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      const double t = 1.0 - mask.at(x, y, 0);
      out.at(x, y, 0) = (1 - t) * gt.at(x, y, 0) + t;
      out.at(x, y, 1) = (1 - t) * gt.at(x, y, 1);
      out.at(x, y, 2) = (1 - t) * gt.at(x, y, 2);
    }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust Gaussian splatting on synthetic scenes"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, config_path, mode_str, resume_path, ckpt_path, dataset_dir, protocol_str;
  std::uint64_t seed = 0;
  bool verbose = false;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset from a scene spec");
  gen->add_option("--config,spec", spec_path, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Dataset directory")->required();
  gen->add_option("--seed", seed, "Override the spec seed");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--mode", mode_str, "3dgs-baseline | robustsplat | robustsplat-plusplus");
  train->add_option("--resume", resume_path, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--dataset", dataset_dir, "Override the dataset directory");
  train->add_flag("-v,--verbose", verbose);

  bool raw = false, affine = false, overlay = false;
  std::string split = "test";
  auto* render = app.add_subcommand("render", "Render views from a checkpoint");
  render->add_option("--checkpoint", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out_dir, "Output directory")->required();
  render->add_option("--dataset", dataset_dir, "Dataset providing the cameras");
  render->add_option("--split", split, "train | test | all")->check(CLI::IsMember({"train", "test", "all"}));
  render->add_flag("--raw", raw, "Raw render");
  render->add_flag("--affine", affine, "Appearance-adjusted render (mean embedding)");
  render->add_flag("--mask-overlay", overlay, "Predicted mask over training images");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset_dir, "Dataset directory");
  eval->add_option("--protocol", protocol_str, "full | left-fit-right-eval");
  eval->add_option("--out", out_dir, "Write metrics.csv here");

  std::vector<std::string> toggles;
  auto* ablate = app.add_subcommand("ablate", "Run the toggle matrix");
  ablate->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--toggles", toggles, "Toggles: mask dg mb mr appearance")->required()->delimiter(',');
  ablate->add_option("--seed", seed, "Override the config seed");
  ablate->add_option("--mode", mode_str, "Mode supplying the untoggled components");
  ablate->add_flag("-v,--verbose", verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  auto load_run_config = [&](CLI::App* sub) {
    RunConfig cfg = load_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    if (!mode_str.empty()) {
      cfg.mode = parse_mode(mode_str);
      cfg.toggles.reset();
    }
    if (sub->get_option_no_throw("--dataset") && sub->count("--dataset")) cfg.dataset_dir = dataset_dir;
    cfg.validate();
    return cfg;
  };

  try {
    if (*gen) {
      SyntheticSceneSpec spec = spec_from_json_file(spec_path);
      if (gen->count("--seed")) spec.seed = seed;
      const Dataset ds = generate(spec, out_dir);
      std::printf("wrote %zu views to %s\n", ds.views.size(), out_dir.c_str());
    } else if (*train) {
      const RunConfig cfg = load_run_config(train);
      RunOptions opt;
      opt.out_dir = out_dir;
      opt.verbose = verbose;
      if (!resume_path.empty()) opt.resume = resume_path;
      try {
        print_summary(run_training(cfg, opt));
      } catch (const NumericError& e) {
        const std::string last = latest_checkpoint(out_dir);
        std::fprintf(stderr, "numeric abort at iteration %ld: %s\n", e.iter(), e.what());
        std::fprintf(stderr, "last good checkpoint: %s\n", last.empty() ? "(none)" : last.c_str());
        return kExitNumeric;
      }
    } else if (*render) {
      const RunConfig cfg = config_from_checkpoint(ckpt_path);
      Trainer tr(cfg, load_dataset(dataset_dir.empty() ? cfg.dataset_dir : dataset_dir));
      tr.load_checkpoint(ckpt_path);
      if (!raw && !affine && !overlay) raw = true;
      fs::create_directories(out_dir);
      const auto emb = tr.appearance_mlp() ? tr.image_embeddings().mean() : std::vector<double>{};
      const auto train_views = tr.dataset().train_views();
      int written = 0;
      for (const auto& v : tr.dataset().views) {
        if ((split == "train" && !v.train) || (split == "test" && v.train)) continue;
        if (raw || affine) {
          const RenderOutput r = tr.render_view(v.cam, emb);
          if (raw) write_png(fs::path(out_dir) / (v.name + "_raw.png"), r.image), ++written;
          if (affine && !r.aux_image.empty()) write_png(fs::path(out_dir) / (v.name + "_affine.png"), r.aux_image), ++written;
        }
        if (overlay && v.train) {
          const auto it = std::find(train_views.begin(), train_views.end(), &v);
          const Image m = tr.predict_train_mask(static_cast<std::size_t>(it - train_views.begin()));
          write_png(fs::path(out_dir) / (v.name + "_mask_overlay.png"), overlay_mask(v.image, m));
          ++written;
        }
      }
      std::printf("wrote %d images to %s\n", written, out_dir.c_str());
    } else if (*eval) {
      std::optional<std::string> ds;
      if (!dataset_dir.empty()) ds = dataset_dir;
      std::optional<EvalProtocol> proto;
      if (!protocol_str.empty()) proto = parse_protocol(protocol_str);
      const RunSummary s = evaluate_checkpoint(ckpt_path, ds, proto);
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream os(fs::path(out_dir) / "metrics.csv", std::ios::binary);
        write_metrics_csv_header(os);
        write_metrics_csv_rows(os, s.train.rows);
        write_metrics_csv_rows(os, s.test.rows);
      }
      print_summary(s);
    } else if (*ablate) {
      const RunConfig cfg = load_run_config(ablate);
      std::vector<Toggle> req;
      for (const auto& t : toggles) req.push_back(parse_toggle(t));
      fs::create_directories(out_dir);
      const auto rows = run_ablation(cfg, req, out_dir, verbose);
      write_ablation_csv(std::cout, rows);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort at iteration %ld: %s\n", e.iter(), e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
