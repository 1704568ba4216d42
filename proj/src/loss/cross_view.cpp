#include "cvar/loss/cross_view.hpp"

#include "cvar/common/error.hpp"
#include "cvar/numerics/ops.hpp"

namespace cvar::loss {

std::vector<std::pair<std::size_t, std::size_t>> pair_set(std::size_t n_exo, std::size_t n_ego, Pairing mode) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (mode == Pairing::Matched) {
    for (std::size_t i = 0; i < std::min(n_exo, n_ego); ++i) pairs.emplace_back(i, i);
  } else {
    for (std::size_t i = 0; i < n_exo; ++i)
      for (std::size_t j = 0; j < n_ego; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

DxTable dx_table(const std::vector<std::vector<double>>& exo_embed,
                 const std::vector<std::vector<double>>& ego_embed, const LossConfig& cfg) {
  DxTable t(exo_embed.size(), std::vector<double>(ego_embed.size()));
  for (std::size_t i = 0; i < exo_embed.size(); ++i)
    for (std::size_t j = 0; j < ego_embed.size(); ++j) t[i][j] = d_x_embedded(exo_embed[i], ego_embed[j], cfg);
  return t;
}

DxTable dx_table(const std::vector<const synth::VideoClip*>& exo,
                 const std::vector<const synth::VideoClip*>& ego, const LossConfig& cfg,
                 const EmbedNet* embed) {
  if (cfg.dx == DxKind::DeepEmbed) {
    if (!embed) throw ConfigError("deep-embed d_x needs an embedding network");
    std::vector<std::vector<double>> ge, gg;
    for (const auto* c : exo) ge.push_back(embed->embed(*c));
    for (const auto* c : ego) gg.push_back(embed->embed(*c));
    return dx_table(ge, gg, cfg);
  }
  DxTable t(exo.size(), std::vector<double>(ego.size()));
  for (std::size_t i = 0; i < exo.size(); ++i)
    for (std::size_t j = 0; j < ego.size(); ++j) t[i][j] = d_x(*exo[i], *ego[j], cfg);
  return t;
}

template <typename T>
num::Tensor<T> l_self(const std::vector<LayerMaps<T>>& exo, const std::vector<LayerMaps<T>>& ego,
                      const DxTable& dx, const LossConfig& cfg) {
  cfg.validate();
  const auto pairs = pair_set(exo.size(), ego.size(), cfg.pairing);
  if (pairs.empty()) throw ConfigError("l_self: empty pair set");
  if (dx.size() < exo.size()) throw ShapeError("l_self: D_x table has too few rows");
  const std::size_t layers = exo.front().size();
  if (layers == 0) throw ShapeError("l_self: no attention layers");
  for (const auto& m : exo)
    if (m.size() != layers) throw ShapeError("l_self: layer counts differ");
  for (const auto& m : ego)
    if (m.size() != layers) throw ShapeError("l_self: layer counts differ");

  std::vector<std::vector<PreparedMap<T>>> pe(exo.size()), pg(ego.size());
  for (std::size_t i = 0; i < exo.size(); ++i)
    for (const auto& m : exo[i]) pe[i].push_back(prepare_map(m, cfg));
  for (std::size_t j = 0; j < ego.size(); ++j)
    for (const auto& m : ego[j]) pg[j].push_back(prepare_map(m, cfg));

  std::vector<num::Tensor<T>> terms;
  terms.reserve(pairs.size() * layers);
  for (auto [i, j] : pairs) {
    if (dx[i].size() < ego.size()) throw ShapeError("l_self: D_x table has too few columns");
    const T target = static_cast<T>(dx[i][j]);
    for (std::size_t l = 0; l < layers; ++l) {
      const auto da = d_a(pe[i][l], pg[j][l], cfg);
      const auto r = num::add_scalar(num::scale(da, static_cast<T>(-cfg.alpha)), target);
      terms.push_back(num::reshape(num::mul(r, r), {1, 1}));
    }
  }
  const auto all = num::concat_cols(terms);
  return num::scale(num::mean(all), static_cast<T>(cfg.lambda));
}

template <typename T>
ObjectiveTerms<T> total_objective(const ViewBatch<T>& exo, const ViewBatch<T>& ego, const DxTable& dx,
                                  const model::ModelParams<T>& params, const model::ModelConfig& mcfg,
                                  const LossConfig& cfg, const model::ForwardOptions& opt, bool self_loss) {
  if (exo.patches.empty() || ego.patches.empty()) throw ConfigError("total_objective: empty batch");
  if (exo.labels.size() != exo.patches.size() || ego.labels.size() != ego.patches.size())
    throw ShapeError("total_objective: one label per clip");
  const bool need_maps = self_loss && cfg.lambda > 0;

  auto run = [&](const ViewBatch<T>& b, model::View view, std::vector<LayerMaps<T>>& maps) {
    std::vector<num::Tensor<T>> logits;
    for (const auto& p : b.patches) {
      auto out = model::forward(p, params, mcfg, view, opt);
      logits.push_back(out.logits);
      if (need_maps) maps.push_back(model::extract_attention(out, cfg.layers));
    }
    return num::cross_entropy(num::concat_rows(logits), std::span<const int>(b.labels));
  };

  ObjectiveTerms<T> t;
  std::vector<LayerMaps<T>> exo_maps, ego_maps;
  t.ce_exo = run(exo, model::View::Exo, exo_maps);
  t.ce_ego = run(ego, model::View::Ego, ego_maps);
  const auto ce = num::add(t.ce_exo, t.ce_ego);
  if (!self_loss) {
    t.l_self = num::Tensor<T>::scalar(T(0));
    t.total = ce;
    return t;
  }
  t.l_self = need_maps ? l_self(exo_maps, ego_maps, dx, cfg) : num::Tensor<T>::scalar(T(0));
  t.total = num::add(ce, t.l_self);
  return t;
}

#define CVAR_INSTANTIATE_CROSS_VIEW(T)                                                                    \
  template num::Tensor<T> l_self(const std::vector<LayerMaps<T>>&, const std::vector<LayerMaps<T>>&,    \
                                 const DxTable&, const LossConfig&);                                     \
  template ObjectiveTerms<T> total_objective(const ViewBatch<T>&, const ViewBatch<T>&, const DxTable&,  \
                                             const model::ModelParams<T>&, const model::ModelConfig&,   \
                                             const LossConfig&, const model::ForwardOptions&, bool);

CVAR_INSTANTIATE_CROSS_VIEW(float)
CVAR_INSTANTIATE_CROSS_VIEW(double)

}  // namespace cvar::loss
