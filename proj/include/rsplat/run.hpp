#pragma once

#include "rsplat/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace rsplat {

/// Configuration stored inside a checkpoint.
RunConfig config_from_checkpoint(const std::filesystem::path& path);

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  bool verbose = false;
  /// Stop after this many completed iterations (the run can later be resumed). Unset = total_iters.
  std::optional<long> stop_at;
};

struct RunSummary {
  EvalReport test;
  EvalReport train;
  std::size_t initial_count = 0;
  std::size_t final_count = 0;
  long iterations = 0;
  double wall_seconds = 0;
};

/// Trains into `out_dir`. The directory receives config.json, version.txt, seed.txt, metrics.csv,
/// densify.csv, steps.csv, supervision.csv, checkpoints and snapshots. On resume, per-iteration logs
/// past the checkpoint are dropped first so the finished directory matches an uninterrupted run.
RunSummary run_training(const RunConfig& cfg, const RunOptions& opt);

/// Evaluates a checkpoint against a dataset (defaults to the checkpoint's dataset).
RunSummary evaluate_checkpoint(const std::filesystem::path& checkpoint, std::optional<std::string> dataset_dir,
                               std::optional<EvalProtocol> protocol);

enum class Toggle { mask, dg, mb, mr, appearance };
const char* toggle_name(Toggle t);
Toggle parse_toggle(const std::string& s);

struct AblationRow {
  std::string label;
  Toggles toggles;
  RunSummary summary;
};

/// Runs every on/off combination of `requested` (other toggles come from the config's mode) with a
/// shared seed and writes `ablation.csv` into `out_dir`.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<Toggle>& requested,
                                      const std::filesystem::path& out_dir, bool verbose = false);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace rsplat
