#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cvar/loss/bound.hpp"
#include "cvar/model/transformer.hpp"
#include "cvar/numerics/gradcheck.hpp"
#include "cvar/synth/dataset.hpp"

namespace cvar::eval {

// Small model used by the objective gradient check: 2 layers, d = 32.
model::ModelConfig gradcheck_model();

// Central differences against the reverse-mode gradient of the full
// objective (both cross-entropies plus the cross-view term) in double
// precision, on random clips, labels and D_x values with perturbed weights.
num::GradCheckReport objective_gradcheck(const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                                         std::uint64_t seed = 1, std::size_t coords_per_tensor = 8);

// Paired clips cropped to the model window with their maps; `triples`
// points into the owned clip vectors.
struct BoundSamples {
  std::vector<synth::VideoClip> exo;
  std::vector<synth::VideoClip> ego;
  std::vector<loss::BoundTriple> triples;
};

// `per_anchor` triples per paired clip, each with a different random
// unrelated ego clip. The split must be paired.
BoundSamples bound_triples(const synth::Dataset& data, const std::string& split, const model::ParamsF& params,
                           const model::ModelConfig& mcfg, const loss::LossConfig& lcfg, std::size_t per_anchor,
                           std::uint64_t seed = 1);

}  // namespace cvar::eval
