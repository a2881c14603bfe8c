#include "rsplat/run.hpp"

#include "rsplat/checkpoint.hpp"
#include "rsplat/png_io.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace rsplat {

namespace fs = std::filesystem;

RunConfig config_from_checkpoint(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw IoError(path.string() + ": not a checkpoint file");
  BinaryReader r(bytes.substr(8), path.string());
  return parse_config(r.str());
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError(p.string() + ": cannot open for writing");
  os << s;
}

/// Keeps the header and rows whose first column is <= max_iter.
void trim_log(const fs::path& p, long max_iter) {
  if (!fs::exists(p)) return;
  std::ifstream is(p, std::ios::binary);
  std::string line, out;
  bool header = true;
  while (std::getline(is, line)) {
    if (header || std::stol(line.substr(0, line.find(','))) <= max_iter) out += line + "\n";
    header = false;
  }
  is.close();
  write_text(p, out);
}

std::ofstream open_log(const fs::path& p, const char* header, bool append) {
  const bool fresh = !append || !fs::exists(p);
  std::ofstream os(p, fresh ? std::ios::binary | std::ios::trunc : std::ios::binary | std::ios::app);
  if (!os) throw IoError(p.string() + ": cannot open for writing");
  if (fresh) os << header << '\n';
  return os;
}

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

void write_snapshots(const Trainer& tr, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const auto emb = tr.appearance_mlp() ? tr.image_embeddings().mean() : std::vector<double>{};
  for (const auto* v : tr.dataset().test_views()) {
    const RenderOutput r = tr.render_view(v->cam, emb);
    write_png(dir / (v->name + "_raw.png"), r.image);
    if (!r.aux_image.empty()) write_png(dir / (v->name + "_affine.png"), r.aux_image);
  }
  if (tr.mask_model()) {
    const auto train = tr.dataset().train_views();
    for (std::size_t t = 0; t < std::min<std::size_t>(4, train.size()); ++t)
      write_png(dir / (train[t]->name + "_mask.png"), tr.predict_train_mask(t));
  }
}

}  // namespace

RunSummary run_training(const RunConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (cfg.dataset_dir.empty()) throw ConfigError("dataset_dir is not set");
  Trainer tr(cfg, load_dataset(cfg.dataset_dir));
  const fs::path& out = opt.out_dir;
  std::error_code ec;
  fs::create_directories(out / "checkpoints", ec);
  if (ec) throw IoError(out.string() + ": cannot create run directory: " + ec.message());

  const bool resuming = opt.resume.has_value();
  if (resuming) {
    tr.load_checkpoint(*opt.resume);
    for (const char* f : {"steps.csv", "supervision.csv", "densify.csv"}) trim_log(out / f, tr.iteration() - 1);
    trim_log(out / "metrics.csv", tr.iteration());
  }
  write_text(out / "config.json", serialize_config(cfg) + "\n");
  write_text(out / "version.txt", std::string(version_string()) + "\n");
  write_text(out / "seed.txt", std::to_string(cfg.seed) + "\n");

  auto metrics = open_log(out / "metrics.csv", "iter,view_id,psnr,ssim,iou_static,iou_transient,gaussian_count", resuming);
  auto steps = open_log(out / "steps.csv", "iter,view_id,gaussian_count,loss,l1,dssim,mask_objective", resuming);
  auto shapes = open_log(out / "supervision.csv",
                         "iter,phase,render_w,render_h,residual_w,residual_h,feature_w,feature_h,input_w,input_h",
                         resuming);
  auto dens = open_log(out / "densify.csv", "iter,gaussian_count,clones,splits,prunes,growth_skipped_cap", resuming);

  auto do_eval = [&](RunSummary* sum) {
    EvalReport test = tr.evaluate_test();
    EvalReport train = tr.evaluate_train();
    write_metrics_csv_rows(metrics, train.rows);
    write_metrics_csv_rows(metrics, test.rows);
    metrics.flush();
    if (opt.verbose)
      std::cerr << "[eval] iter " << tr.iteration() << " test psnr " << fmt("%.3f", test.mean_psnr) << " train psnr "
                << fmt("%.3f", train.mean_psnr) << " count " << tr.gaussians().size() << "\n";
    if (sum) {
      sum->test = std::move(test);
      sum->train = std::move(train);
    }
  };

  if (!resuming && cfg.eval_interval > 0) do_eval(nullptr);
  const long stop = std::min(cfg.total_iters, opt.stop_at.value_or(cfg.total_iters));
  while (tr.iteration() < stop) {
    try {
      tr.step();
    } catch (const NumericError&) {
      steps.flush();
      throw;
    }
    const StepLog& s = tr.last_step();
    steps << s.iter << ',' << s.view_id << ',' << s.gaussian_count << ',' << fmt("%.9g", s.loss) << ','
          << fmt("%.9g", s.l1) << ',' << fmt("%.9g", s.dssim) << ','
          << (s.mask_objective ? fmt("%.9g", *s.mask_objective) : std::string()) << '\n';
    if (const auto& sh = tr.last_shape())
      shapes << sh->iter << ',' << phase_name(sh->phase) << ',' << sh->render_w << ',' << sh->render_h << ','
             << sh->residual_w << ',' << sh->residual_h << ',' << sh->feature_w << ',' << sh->feature_h << ','
             << sh->input_w << ',' << sh->input_h << '\n';
    const DensifyReport& d = tr.last_densify();
    if (d.acted)
      dens << d.iter << ',' << d.count << ',' << d.clones << ',' << d.splits << ',' << d.prunes << ','
           << (d.growth_skipped_cap ? 1 : 0) << '\n';
    const long k = tr.iteration();
    const bool final_iter = k == cfg.total_iters;
    if (!final_iter && cfg.eval_interval > 0 && k % cfg.eval_interval == 0) do_eval(nullptr);
    if (!final_iter && cfg.checkpoint_interval > 0 && k % cfg.checkpoint_interval == 0) {
      steps.flush();
      shapes.flush();
      dens.flush();
      char name[64];
      std::snprintf(name, sizeof name, "ckpt_%06ld.rsck", k);
      tr.save_checkpoint(out / "checkpoints" / name);
    }
    if (opt.verbose && k % 250 == 0)
      std::cerr << "[train] iter " << k << " loss " << fmt("%.5f", s.loss) << " count " << tr.gaussians().size()
                << "\n";
  }

  RunSummary sum;
  sum.initial_count = tr.initial_count();
  if (tr.done()) {
    do_eval(&sum);
    tr.save_checkpoint(out / "checkpoint.rsck");
    if (cfg.write_snapshots) write_snapshots(tr, out / "snapshots");
  } else {
    char name[64];
    std::snprintf(name, sizeof name, "ckpt_%06ld.rsck", tr.iteration());
    tr.save_checkpoint(out / "checkpoints" / name);
  }
  sum.final_count = tr.gaussians().size();
  sum.iterations = tr.iteration();
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sum.test.wall_seconds = sum.wall_seconds;
  return sum;
}

RunSummary evaluate_checkpoint(const fs::path& checkpoint, std::optional<std::string> dataset_dir,
                               std::optional<EvalProtocol> protocol) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig stored = config_from_checkpoint(checkpoint);
  RunConfig cfg = stored;
  if (dataset_dir) cfg.dataset_dir = *dataset_dir;
  if (protocol) cfg.protocol = *protocol;
  std::string bytes = read_file_bytes(checkpoint);
  if (!(cfg == stored)) {
    // the embedded config must match the trainer's, so rewrite it
    BinaryReader r(bytes.substr(8), checkpoint.string());
    r.str();
    BinaryWriter w;
    w.str(serialize_config(cfg));
    bytes = bytes.substr(0, 8) + w.bytes() + bytes.substr(8 + r.position());
  }
  Trainer tr(cfg, load_dataset(cfg.dataset_dir));
  tr.load_checkpoint_bytes(bytes, checkpoint.string());
  RunSummary sum;
  sum.test = tr.evaluate_test();
  sum.train = tr.evaluate_train();
  sum.initial_count = tr.initial_count();
  sum.final_count = tr.gaussians().size();
  sum.iterations = tr.iteration();
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sum.test.wall_seconds = sum.wall_seconds;
  return sum;
}

const char* toggle_name(Toggle t) {
  switch (t) {
    case Toggle::mask: return "mask";
    case Toggle::dg: return "dg";
    case Toggle::mb: return "mb";
    case Toggle::mr: return "mr";
    case Toggle::appearance: return "appearance";
  }
  return "?";
}

Toggle parse_toggle(const std::string& s) {
  for (Toggle t : {Toggle::mask, Toggle::dg, Toggle::mb, Toggle::mr, Toggle::appearance})
    if (s == toggle_name(t)) return t;
  throw ConfigError("unknown toggle '" + s + "' (expected mask, dg, mb, mr, appearance)");
}

namespace {

bool& toggle_ref(Toggles& t, Toggle which) {
  switch (which) {
    case Toggle::mask: return t.mask;
    case Toggle::dg: return t.dg;
    case Toggle::mb: return t.mb;
    case Toggle::mr: return t.mr;
    case Toggle::appearance: return t.appearance;
  }
  return t.mask;
}

std::string label_of(Toggles t, const std::vector<Toggle>& requested) {
  std::string s;
  for (Toggle r : requested) {
    if (!toggle_ref(t, r)) continue;
    if (!s.empty()) s += "+";
    s += toggle_name(r);
  }
  return s.empty() ? "none" : s;
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<Toggle>& requested,
                                      const fs::path& out_dir, bool verbose) {
  std::vector<Toggle> req;
  for (Toggle t : requested)
    if (std::find(req.begin(), req.end(), t) == req.end()) req.push_back(t);
  const Toggles base = cfg.effective_toggles();
  std::vector<AblationRow> rows;
  for (unsigned bits = 0; bits < (1u << req.size()); ++bits) {
    Toggles t = base;
    for (std::size_t k = 0; k < req.size(); ++k) toggle_ref(t, req[k]) = (bits >> k) & 1u;
    RunConfig c = cfg;
    c.toggles = t;
    AblationRow row;
    row.label = label_of(t, req);
    row.toggles = t;
    if (verbose) std::cerr << "[ablate] " << row.label << "\n";
    RunOptions o;
    o.out_dir = out_dir / row.label;
    o.verbose = verbose;
    row.summary = run_training(c, o);
    rows.push_back(std::move(row));
  }
  std::ofstream os(out_dir / "ablation.csv", std::ios::binary);
  if (!os) throw IoError((out_dir / "ablation.csv").string() + ": cannot open for writing");
  write_ablation_csv(os, rows);
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "label,mask,dg,mb,mr,appearance,psnr,ssim,iou_transient,gaussian_count,delta_psnr_vs_last\n";
  const double ref = rows.empty() ? 0.0 : rows.back().summary.test.mean_psnr;
  for (const auto& r : rows) {
    const auto& t = r.toggles;
    const auto& s = r.summary;
    os << r.label << ',' << t.mask << ',' << t.dg << ',' << t.mb << ',' << t.mr << ',' << t.appearance << ','
       << fmt("%.6f", psnr_for_csv(s.test.mean_psnr)) << ',' << fmt("%.6f", s.test.mean_ssim) << ','
       << (s.train.mean_iou_transient ? fmt("%.6f", *s.train.mean_iou_transient) : std::string()) << ','
       << s.final_count << ',' << fmt("%.6f", psnr_for_csv(s.test.mean_psnr) - psnr_for_csv(ref)) << '\n';
  }
}

}  // namespace rsplat
