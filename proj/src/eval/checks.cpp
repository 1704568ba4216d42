#include "cvar/eval/checks.hpp"

#include "cvar/common/error.hpp"
#include "cvar/loss/cross_view.hpp"

namespace cvar::eval {

model::ModelConfig gradcheck_model() {
  model::ModelConfig m;
  m.frames = 4;
  m.height = m.width = 16;
  m.dim = 32;
  m.layers = 2;
  m.heads = 4;
  m.classes_exo = m.classes_ego = 8;
  return m;
}

num::GradCheckReport objective_gradcheck(const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                                         std::uint64_t seed, std::size_t coords_per_tensor) {
  mcfg.validate();
  lcfg.validate();
  Rng rng(mix_seed(seed, 0x67c4));
  auto params = model::ParamsD::init(mcfg);
  // Default init keeps attention near uniform; larger weights exercise every path.
  for (auto t : params.tensors())
    for (auto& v : t.mutable_data()) v += 0.3 * rng.normal();

  auto clip = [&] {
    std::vector<float> v(mcfg.clip_numel());
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    return model::patchify<double>(v, mcfg);
  };
  loss::ViewBatch<double> exo, ego;
  for (int i = 0; i < 2; ++i) {
    exo.patches.push_back(clip());
    exo.labels.push_back(static_cast<int>(rng.below(mcfg.classes_exo)));
    ego.patches.push_back(clip());
    ego.labels.push_back(static_cast<int>(rng.below(mcfg.classes_ego)));
  }
  loss::DxTable dx(2, std::vector<double>(2));
  for (auto& row : dx)
    for (auto& v : row) v = 3.0 * rng.uniform();

  params.set_requires_grad(true);
  auto objective = [&] {
    return loss::total_objective(exo, ego, dx, params, mcfg, lcfg).total;
  };
  return num::finite_diff_check_params(objective, params.tensors(), 1e-5, coords_per_tensor, seed);
}

BoundSamples bound_triples(const synth::Dataset& data, const std::string& split, const model::ParamsF& params,
                           const model::ModelConfig& mcfg, const loss::LossConfig& lcfg, std::size_t per_anchor,
                           std::uint64_t seed) {
  if (!data.manifest.split(split).paired) throw ConfigError("bound check needs a paired split, '" + split + "' is not");
  const auto& src = split == "train" ? data.train : data.val;
  if (src.exo.size() < 2) throw ConfigError("bound check needs at least two paired clips");
  if (per_anchor < 1) throw ConfigError("bound check needs at least one triple per clip");

  BoundSamples s;
  std::vector<std::vector<std::vector<double>>> me, mg;
  auto maps = [&](const synth::VideoClip& c, model::View v) {
    std::vector<std::vector<double>> out;
    const auto f = model::forward(c, params, mcfg, v);
    for (const auto& t : model::extract_attention(f, lcfg.layers)) out.emplace_back(t.data().begin(), t.data().end());
    return out;
  };
  for (std::size_t i = 0; i < src.exo.size(); ++i) {
    s.exo.push_back(model::center_crop(src.exo[i], mcfg.height, mcfg.width));
    s.ego.push_back(model::center_crop(src.ego[i], mcfg.height, mcfg.width));
    me.push_back(maps(s.exo.back(), model::View::Exo));
    mg.push_back(maps(s.ego.back(), model::View::Ego));
  }
  Rng rng(mix_seed(seed, 0xb0d));
  const std::size_t n = s.exo.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < per_anchor; ++k) {
      std::size_t j = rng.below(n - 1);
      if (j >= i) ++j;
      s.triples.push_back({&s.exo[i], &s.ego[i], &s.ego[j], me[i], mg[i], mg[j]});
    }
  return s;
}

}  // namespace cvar::eval
