#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cvar/loss/metrics.hpp"
#include "cvar/model/transformer.hpp"

namespace cvar::loss {

// Constant D_x targets, indexed [exo clip][ego clip].
using DxTable = std::vector<std::vector<double>>;

// Selected-layer attention maps of one clip, each 1 x N.
template <typename T>
using LayerMaps = std::vector<num::Tensor<T>>;

// (exo, ego) index pairs: i <-> i for matched, the full grid otherwise.
std::vector<std::pair<std::size_t, std::size_t>> pair_set(std::size_t n_exo, std::size_t n_ego, Pairing mode);

// D_x over the pair grid from precomputed embeddings (deep form) or raw clip
// values (pixel form); either way one row per exo clip.
DxTable dx_table(const std::vector<std::vector<double>>& exo_embed,
                 const std::vector<std::vector<double>>& ego_embed, const LossConfig& cfg);
DxTable dx_table(const std::vector<const synth::VideoClip*>& exo,
                 const std::vector<const synth::VideoClip*>& ego, const LossConfig& cfg,
                 const EmbedNet* embed = nullptr);

// lambda * mean over pairs and layers of (D_x - alpha D_a)^2. D_x is a
// constant; gradients reach only the maps.
template <typename T>
num::Tensor<T> l_self(const std::vector<LayerMaps<T>>& exo, const std::vector<LayerMaps<T>>& ego,
                      const DxTable& dx, const LossConfig& cfg);

template <typename T>
struct ViewBatch {
  std::vector<num::Tensor<T>> patches;  // one patchified clip each
  std::vector<int> labels;
};

template <typename T>
struct ObjectiveTerms {
  num::Tensor<T> total;
  num::Tensor<T> ce_exo;
  num::Tensor<T> ce_ego;
  num::Tensor<T> l_self;
};

// CE(exo head) + CE(ego head) + l_self. With self_loss off the last term is
// left out of the graph altogether; with lambda = 0 it is a constant zero.
template <typename T>
ObjectiveTerms<T> total_objective(const ViewBatch<T>& exo, const ViewBatch<T>& ego, const DxTable& dx,
                                  const model::ModelParams<T>& params, const model::ModelConfig& mcfg,
                                  const LossConfig& cfg, const model::ForwardOptions& opt = {},
                                  bool self_loss = true);

}  // namespace cvar::loss
