#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvar/eval/metrics.hpp"
#include "cvar/loss/metrics.hpp"
#include "cvar/model/transformer.hpp"
#include "cvar/synth/dataset.hpp"
#include "cvar/synth/warp.hpp"

namespace cvar::eval {

struct ViewReport {
  std::size_t samples = 0;
  double top1 = 0;
  double top5 = 0;
  double map = 0;
  std::vector<double> per_class_ap;
  std::vector<int> excluded_classes;
};

// Softmax scores of every clip, averaged over the crops: the centre crop,
// or top-left, centre and bottom-right.
ScoreMatrix predict_scores(const model::ParamsF& params, const std::vector<synth::VideoClip>& clips,
                           const model::ModelConfig& mcfg, model::View view, int crops = 1);

ViewReport eval_split(const model::ParamsF& params, const std::vector<synth::VideoClip>& clips,
                      const model::ModelConfig& mcfg, model::View view, int crops = 1);

enum class WarpMass { Discard, Uniform };

// Exo attention pushed through a correspondence field. Comparison happens on
// the ego cells hit by at least one mapped exo cell; the true ego map is
// restricted to that support and renormalized. Mass on unmapped exo cells is
// dropped (Discard) or spread evenly over the support (Uniform).
struct WarpedPair {
  std::vector<double> warped;
  std::vector<double> target;
  std::vector<int> support;  // ego cell indices, ascending
};
std::optional<WarpedPair> warp_attention(const synth::CorrespondenceField& field, std::span<const double> a_exo,
                                         std::span<const double> a_ego, WarpMass mass = WarpMass::Discard);

// Same field with the mapped targets relabelled by a random bijection of the
// support: the null model for warp agreement.
synth::CorrespondenceField permute_targets(const synth::CorrespondenceField& field, Rng& rng);

struct Remark2Options {
  WarpMass mass = WarpMass::Discard;
  std::uint64_t seed = 1;
  std::size_t max_clips = 0;  // 0: every clip of the split
};

struct Remark2Report {
  std::size_t clips = 0;
  std::size_t skipped = 0;  // no visible correspondence
  double mean = 0;          // symmetrized-KL agreement, mean over clips and layers
  double null_mean = 0;
  double null_std = 0;      // across clips
  std::vector<double> per_clip;
  std::vector<double> null_per_clip;
  bool pass() const { return clips > 0 && mean < null_mean && null_mean - mean > null_std; }
};

// Needs a paired split with depth maps on disk.
Remark2Report remark2_oracle(const model::ParamsF& params, const synth::Dataset& data, const std::string& split,
                             const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                             const Remark2Options& opt = {});

struct LinearFit {
  std::optional<double> pearson;  // undefined for zero variance
  double slope = 0;               // least squares y = slope * x + intercept
  double intercept = 0;
  std::size_t n = 0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

struct ProportionalityReport {
  LinearFit fit;  // x = D_x, y = D_a, so slope estimates 1 / alpha
  std::vector<double> dx;
  std::vector<double> da;
};

// D_x against the layer-mean D_a over randomly drawn cross-scene pairs of the
// given exo and ego clips.
ProportionalityReport proportionality_report(const model::ParamsF& params, const loss::EmbedNet* embed,
                                             const std::vector<synth::VideoClip>& exo,
                                             const std::vector<synth::VideoClip>& ego,
                                             const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                                             std::size_t pairs = 200, std::uint64_t seed = 1);

struct EvalReport {
  ViewReport exo;
  ViewReport ego;
  std::optional<double> proportionality;
  std::optional<double> proportionality_untrained;
  std::optional<Remark2Report> remark2;
  std::string fingerprint;
};

// Writes one `<scene>_<view>_l<layer>.attn.f32` per clip and layer, each a
// (T/K) x (H/P) x (W/P) float map. Returns the written paths.
std::vector<std::filesystem::path> dump_attention(const model::ParamsF& params,
                                                  const std::vector<synth::VideoClip>& clips,
                                                  const model::ModelConfig& mcfg, const std::vector<int>& layers,
                                                  const std::filesystem::path& out);

}  // namespace cvar::eval
