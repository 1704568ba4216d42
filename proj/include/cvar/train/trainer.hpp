#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cvar/common/rng.hpp"
#include "cvar/loss/cross_view.hpp"
#include "cvar/model/checkpoint.hpp"
#include "cvar/train/config.hpp"

namespace cvar::train {

// One view of the train split, cropped and patchified once up front.
struct ViewData {
  std::vector<num::TensorF> patches;
  std::vector<int> labels;
  std::vector<std::uint64_t> scenes;
  std::vector<std::vector<double>> embed;  // G(x), deep-embed D_x only
  std::vector<std::vector<float>> pixels;  // cropped values

  std::size_t size() const { return patches.size(); }
};

struct TrainData {
  ViewData exo;
  ViewData ego;
};

// Centre-crops to the model window and patchifies. G(x) is cached for the
// deep-embed kind; `embed` may be null for the pixel kind.
ViewData prepare_view(const std::vector<synth::VideoClip>& clips, const model::ModelConfig& mcfg,
                      const loss::LossConfig& lcfg, const loss::EmbedNet* embed);

struct StepMetrics {
  std::uint64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double ce_exo = 0;
  double ce_ego = 0;
  double l_self = 0;
  double total = 0;
};

struct EpochMetrics {
  int epoch = 0;
  std::size_t steps = 0;
  double ce_exo = 0;  // means over the epoch's steps
  double ce_ego = 0;
  double l_self = 0;
  double total = 0;
};

struct TrainState {
  model::ParamsF params;
  std::vector<std::vector<float>> velocity;  // aligned with params.tensors()
  std::uint64_t step = 0;
  int epoch = 0;  // completed epochs
  Rng rng;
};

TrainState init_state(const TrainConfig& cfg);

std::size_t steps_per_epoch(const TrainData& data, int batch);

// Mirrors the clip horizontally with probability 1/2 and shifts it by -1, 0
// or +1 frames, repeating the edge frame.
std::vector<float> augment_clip(std::span<const float> clip, const model::ModelConfig& mcfg, Rng& rng);

// Runs one epoch: fresh shuffles, then one SGD-with-momentum step per batch.
// `on_step` sees every step's metrics. A non-finite loss throws NumericError
// after writing a diagnostic to `dump_dir` when one is given.
EpochMetrics train_epoch(TrainState& state, const TrainData& data, const TrainConfig& cfg,
                         const std::function<void(const StepMetrics&)>& on_step = {},
                         const std::filesystem::path& dump_dir = {});

// Reduced copy of the model trained on exo cross-entropy alone, then frozen.
loss::EmbedNet pretrain_embed(const ViewData& exo, const TrainConfig& cfg,
                              std::ostream* log = nullptr);

model::Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg);
TrainState from_checkpoint(const model::Checkpoint& ckpt);

// Model config of the reduced encoder: the main model with fewer layers.
model::ModelConfig embed_config(const TrainConfig& cfg);

inline constexpr const char* kMetricsHeader = "step,epoch,lr,ce_exo,ce_ego,l_self,total";
std::string format_metrics_row(const StepMetrics& m);

struct RunOptions {
  std::filesystem::path out;  // empty: nothing is written
  bool resume = false;        // continue from <out>/model.ckpt when present
  int stop_after_epoch = -1;  // simulate an interruption after this epoch
  std::ostream* log = nullptr;
};

struct RunResult {
  TrainState state;
  loss::EmbedNet embed;
  std::vector<EpochMetrics> epochs;  // epochs run by this call
  std::vector<StepMetrics> steps;
};

// Aligns the model with the dataset (classes, frames), pretrains or reloads
// G, trains, and writes under `out`:
//   config.txt     effective configuration
//   metrics.csv    one row per step
//   embed.ckpt     frozen G
//   model.ckpt     latest state, plus model_eNNN.ckpt every checkpoint_every epochs
RunResult run_training(TrainConfig cfg, const synth::Dataset& data, const RunOptions& opt = {});

// Model config adjusted to a dataset's class count and clip length.
TrainConfig align_to_dataset(TrainConfig cfg, const synth::DatasetManifest& manifest);

}  // namespace cvar::train
