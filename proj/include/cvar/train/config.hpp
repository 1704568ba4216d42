#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "cvar/loss/metrics.hpp"
#include "cvar/model/transformer.hpp"
#include "cvar/synth/dataset.hpp"

namespace cvar::train {

// One flat namespace shared by every subcommand. Trainer and loss keys are
// bare (`lr`, `alpha`), architecture keys live under `model.`, dataset
// generation under `data.` and evaluation under `eval.`.
struct TrainConfig {
  int epochs = 50;
  double lr = 0.1;
  double momentum = 0.9;
  double clip_norm = 1.0;  // global gradient-norm cap; 0 disables
  int batch = 4;  // per view
  std::uint64_t seed = 1;
  bool unpaired = true;   // independent exo and ego shuffles; no batch holds both views of a scene
  bool self_loss = true;  // false leaves l_self out of the objective entirely
  bool augment = false;   // random horizontal flip and one-frame temporal jitter
  int checkpoint_every = 0;  // epochs between numbered checkpoints; 0 keeps only the latest

  int embed_epochs = 10;
  int embed_layers = 2;
  double embed_lr = 0.1;

  loss::LossConfig loss;
  model::ModelConfig model;
  synth::DatasetConfig dataset;
  std::string data;  // dataset root for train / eval
  int eval_crops = 1;

  void validate() const;
};

// Parses `key = value` lines; `#` starts a comment. Unknown keys and
// malformed values raise ConfigError.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void apply_override(TrainConfig& cfg, std::string_view key, std::string_view value);

// Every key in a fixed order with round-trip exact numbers.
std::string to_text(const TrainConfig& cfg);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);
std::map<std::string, std::string> to_map(const TrainConfig& cfg);
// SHA-256 of to_text.
std::string fingerprint(const TrainConfig& cfg);

// base_lr * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr);

}  // namespace cvar::train
