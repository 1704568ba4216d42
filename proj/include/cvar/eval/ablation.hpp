#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cvar/eval/evaluate.hpp"
#include "cvar/train/trainer.hpp"

namespace cvar::eval {

enum class AblationKind { Alpha, Metric, Layers, Lambda, Pairing };

std::string_view to_string(AblationKind k);
AblationKind parse_ablation_kind(std::string_view s);
// Config keys a kind may change.
std::vector<std::string> swept_keys(AblationKind k);

struct AblationCell {
  std::string label;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// alpha: 0 .. 2; metric: {pixel, embed} x {l2, symkl}; layers: cumulative
// quarters of the depth; lambda: a log grid; pairing: matched and all.
std::vector<AblationCell> default_grid(AblationKind k, const train::TrainConfig& base);
// Comma-separated values of the kind's key, e.g. "0,0.5,1" for alpha or
// "pixel:l2,embed:symkl" for metric.
std::vector<AblationCell> parse_grid(AblationKind k, std::string_view values);

// Scores of a trained run on the val split: both views, proportionality
// against the untrained seed-matched model, and the warp oracle.
EvalReport full_report(const train::RunResult& run, const train::TrainConfig& cfg, const synth::Dataset& data,
                       const Remark2Options& r2 = {});

struct CellResult {
  AblationCell cell;
  train::TrainConfig config;  // effective, aligned with the dataset
  EvalReport report;
};

struct AblationOptions {
  std::filesystem::path out;  // cells under out/<label>, table at out/<kind>.csv
  int threads = 1;
  std::ostream* log = nullptr;
};

// Trains and evaluates every cell from the same seed. A cell directory that
// already holds a finished run is reused. The table is rewritten after each
// cell so an interruption leaves the finished rows on disk.
std::vector<CellResult> run_ablation(AblationKind kind, const std::vector<AblationCell>& grid,
                                     const train::TrainConfig& base, const synth::Dataset& data,
                                     const AblationOptions& opt);

// Throws ConfigError when two cells differ in a key outside swept_keys(kind).
void check_cells_isolated(AblationKind kind, const std::vector<CellResult>& cells);

inline constexpr const char* kAblationHeader =
    "cell,exo_top1,exo_top5,exo_map,ego_top1,ego_top5,ego_map,proportionality,proportionality_untrained,"
    "remark2,remark2_null,remark2_null_std,fingerprint";
void write_table(const std::filesystem::path& path, const std::vector<CellResult>& cells);
// Ego and exo top-1 per cell as a line plot.
void write_svg(const std::filesystem::path& path, AblationKind kind, const std::vector<CellResult>& cells);

// Worker cap from CVAR_THREADS, else the hardware concurrency.
int worker_threads();

}  // namespace cvar::eval
