#include "cvar/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"

namespace cvar::eval {

namespace fs = std::filesystem;

namespace {

std::vector<synth::VideoClip> crops_of(const synth::VideoClip& clip, const model::ModelConfig& mcfg, int crops) {
  if (crops == 1) return {model::center_crop(clip, mcfg.height, mcfg.width)};
  if (crops != 3) throw ConfigError("crops must be 1 or 3");
  if (clip.height < mcfg.height + 2 || clip.width < mcfg.width + 2)
    throw ConfigError("three crops need the frame to exceed the model window by at least 2 pixels");
  return {model::crop(clip, 0, 0, mcfg.height, mcfg.width), model::center_crop(clip, mcfg.height, mcfg.width),
          model::crop(clip, clip.height - mcfg.height, clip.width - mcfg.width, mcfg.height, mcfg.width)};
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

// Maps of the requested layers for one centre-cropped clip.
std::vector<std::vector<double>> layer_maps(const model::ParamsF& params, const synth::VideoClip& clip,
                                            const model::ModelConfig& mcfg, model::View view,
                                            const std::vector<int>& layers) {
  const auto out = model::forward(model::center_crop(clip, mcfg.height, mcfg.width), params, mcfg, view);
  std::vector<std::vector<double>> maps;
  for (const auto& t : model::extract_attention(out, layers)) maps.push_back(to_double(t.data()));
  return maps;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ScoreMatrix predict_scores(const model::ParamsF& params, const std::vector<synth::VideoClip>& clips,
                           const model::ModelConfig& mcfg, model::View view, int crops) {
  const auto classes = static_cast<std::size_t>(view == model::View::Exo ? mcfg.classes_exo : mcfg.classes_ego);
  ScoreMatrix s(clips.size(), classes);
  for (std::size_t r = 0; r < clips.size(); ++r) {
    const auto windows = crops_of(clips[r], mcfg, crops);
    for (const auto& w : windows) {
      const auto out = model::forward(w, params, mcfg, view);
      const auto logits = out.logits.data();
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (float l : logits) z += std::exp(l - mx);
      for (std::size_t c = 0; c < classes; ++c) s.at(r, c) += std::exp(logits[c] - mx) / z;
    }
    for (std::size_t c = 0; c < classes; ++c) s.at(r, c) /= static_cast<double>(windows.size());
  }
  return s;
}

ViewReport eval_split(const model::ParamsF& params, const std::vector<synth::VideoClip>& clips,
                      const model::ModelConfig& mcfg, model::View view, int crops) {
  if (clips.empty()) throw ConfigError("eval_split: no clips");
  const auto scores = predict_scores(params, clips, mcfg, view, crops);
  std::vector<int> labels;
  for (const auto& c : clips) labels.push_back(c.label);
  ViewReport r;
  r.samples = clips.size();
  r.top1 = topk_accuracy(scores, labels, 1);
  r.top5 = topk_accuracy(scores, labels, std::min<int>(5, static_cast<int>(scores.cols)));
  const auto ap = mean_average_precision(scores, one_hot(labels, scores.cols));
  r.map = ap.map;
  r.per_class_ap = ap.per_class;
  r.excluded_classes = ap.excluded;
  return r;
}

std::optional<WarpedPair> warp_attention(const synth::CorrespondenceField& field, std::span<const double> a_exo,
                                         std::span<const double> a_ego, WarpMass mass) {
  const auto n = field.cells.size();
  if (a_exo.size() != n || a_ego.size() != n) throw ShapeError("warp_attention: map size does not match the field");
  std::set<int> hit;
  for (const auto& c : field.cells)
    if (c.status == synth::CellStatus::Mapped) hit.insert(c.target);
  if (hit.empty()) return std::nullopt;

  WarpedPair p;
  p.support.assign(hit.begin(), hit.end());
  std::vector<int> slot(n, -1);
  for (std::size_t k = 0; k < p.support.size(); ++k) slot[p.support[k]] = static_cast<int>(k);
  p.warped.assign(p.support.size(), 0.0);
  double lost = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = field.cells[i];
    if (c.status == synth::CellStatus::Mapped)
      p.warped[slot[c.target]] += a_exo[i];
    else
      lost += a_exo[i];
  }
  if (mass == WarpMass::Uniform)
    for (auto& v : p.warped) v += lost / static_cast<double>(p.warped.size());
  for (int t : p.support) p.target.push_back(a_ego[t]);

  const double zw = std::accumulate(p.warped.begin(), p.warped.end(), 0.0);
  const double zt = std::accumulate(p.target.begin(), p.target.end(), 0.0);
  if (!(zw > 0) || !(zt > 0)) return std::nullopt;
  for (auto& v : p.warped) v /= zw;
  for (auto& v : p.target) v /= zt;
  return p;
}

synth::CorrespondenceField permute_targets(const synth::CorrespondenceField& field, Rng& rng) {
  std::set<int> hit;
  for (const auto& c : field.cells)
    if (c.status == synth::CellStatus::Mapped) hit.insert(c.target);
  const std::vector<int> from(hit.begin(), hit.end());
  auto to = from;
  rng.shuffle(to.begin(), to.end());
  auto out = field;
  for (auto& c : out.cells)
    if (c.status == synth::CellStatus::Mapped)
      c.target = to[std::lower_bound(from.begin(), from.end(), c.target) - from.begin()];
  return out;
}

Remark2Report remark2_oracle(const model::ParamsF& params, const synth::Dataset& data, const std::string& split,
                             const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                             const Remark2Options& opt) {
  const auto& manifest = data.manifest.split(split);
  if (!manifest.paired) throw ConfigError("remark2_oracle: split '" + split + "' is not paired");
  const auto& clips = split == "train" ? data.train : data.val;
  const auto& dc = data.manifest.config;

  synth::TokenGrid grid;
  grid.frames = mcfg.frames;
  grid.temporal_patch = mcfg.temporal_patch;
  grid.patch = mcfg.patch;
  grid.crop_top = (dc.size - mcfg.height) / 2;
  grid.crop_left = (dc.size - mcfg.width) / 2;
  grid.crop_height = mcfg.height;
  grid.crop_width = mcfg.width;

  loss::LossConfig symkl = lcfg;
  symkl.da = loss::DaKind::SymKL;
  Rng rng(mix_seed(opt.seed, 0x4e11));
  Remark2Report r;
  std::size_t n = clips.exo.size();
  if (opt.max_clips > 0) n = std::min(n, opt.max_clips);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& exo = clips.exo[i];
    const auto& ego = clips.ego[i];
    const auto field = synth::ground_truth_warp(data.load_depth(split, model::View::Exo, i),
                                                data.load_depth(split, model::View::Ego, i), exo.rigs, ego.rigs,
                                                dc.size, dc.size, grid);
    const auto null_field = permute_targets(field, rng);
    const auto me = layer_maps(params, exo, mcfg, model::View::Exo, lcfg.layers);
    const auto mg = layer_maps(params, ego, mcfg, model::View::Ego, lcfg.layers);
    std::vector<double> agree, null;
    for (std::size_t l = 0; l < me.size(); ++l) {
      const auto p = warp_attention(field, me[l], mg[l], opt.mass);
      const auto q = warp_attention(null_field, me[l], mg[l], opt.mass);
      if (!p || !q) break;
      agree.push_back(loss::d_a(p->warped, p->target, symkl));
      null.push_back(loss::d_a(q->warped, q->target, symkl));
    }
    if (agree.size() != me.size()) {
      ++r.skipped;
      continue;
    }
    r.per_clip.push_back(mean_of(agree));
    r.null_per_clip.push_back(mean_of(null));
  }
  r.clips = r.per_clip.size();
  r.mean = mean_of(r.per_clip);
  r.null_mean = mean_of(r.null_per_clip);
  double ss = 0;
  for (double v : r.null_per_clip) ss += (v - r.null_mean) * (v - r.null_mean);
  r.null_std = r.clips > 1 ? std::sqrt(ss / static_cast<double>(r.clips - 1)) : 0.0;
  return r;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("fit_line: x and y differ in length");
  if (x.size() < 2) throw ConfigError("fit_line: needs at least two points");
  LinearFit f;
  f.n = x.size();
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / f.n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / f.n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < f.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx > 0) {
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
  }
  if (sxx > 0 && syy > 0) f.pearson = sxy / std::sqrt(sxx * syy);
  return f;
}

ProportionalityReport proportionality_report(const model::ParamsF& params, const loss::EmbedNet* embed,
                                             const std::vector<synth::VideoClip>& exo,
                                             const std::vector<synth::VideoClip>& ego,
                                             const model::ModelConfig& mcfg, const loss::LossConfig& lcfg,
                                             std::size_t pairs, std::uint64_t seed) {
  if (pairs < 100) throw ConfigError("proportionality_report: needs at least 100 pairs");
  if (exo.empty() || ego.empty()) throw ConfigError("proportionality_report: empty split");
  std::vector<std::vector<std::vector<double>>> me, mg;
  std::vector<synth::VideoClip> ce, cg;
  for (const auto& c : exo) {
    ce.push_back(model::center_crop(c, mcfg.height, mcfg.width));
    me.push_back(layer_maps(params, c, mcfg, model::View::Exo, lcfg.layers));
  }
  for (const auto& c : ego) {
    cg.push_back(model::center_crop(c, mcfg.height, mcfg.width));
    mg.push_back(layer_maps(params, c, mcfg, model::View::Ego, lcfg.layers));
  }
  Rng rng(mix_seed(seed, 0x9a17));
  ProportionalityReport r;
  std::size_t attempts = 0;
  while (r.dx.size() < pairs) {
    if (++attempts > 100 * pairs) throw ConfigError("proportionality_report: too few cross-scene pairs");
    const auto i = rng.below(exo.size()), j = rng.below(ego.size());
    if (exo[i].scene_id == ego[j].scene_id) continue;
    double da = 0;
    for (std::size_t l = 0; l < me[i].size(); ++l) da += loss::d_a(me[i][l], mg[j][l], lcfg);
    r.dx.push_back(loss::d_x(ce[i], cg[j], lcfg, embed));
    r.da.push_back(da / static_cast<double>(me[i].size()));
  }
  r.fit = fit_line(r.dx, r.da);
  return r;
}

std::vector<fs::path> dump_attention(const model::ParamsF& params, const std::vector<synth::VideoClip>& clips,
                                     const model::ModelConfig& mcfg, const std::vector<int>& layers,
                                     const fs::path& out) {
  fs::create_directories(out);
  std::vector<fs::path> written;
  std::vector<int> sorted = layers;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& clip : clips) {
    const auto o = model::forward(model::center_crop(clip, mcfg.height, mcfg.width), params, mcfg, clip.view);
    const auto maps = model::extract_attention(o, sorted);
    for (std::size_t l = 0; l < maps.size(); ++l) {
      char name[96];
      std::snprintf(name, sizeof name, "%llu_%s_l%d.attn.f32", static_cast<unsigned long long>(clip.scene_id),
                    std::string(synth::view_name(clip.view)).c_str(), sorted[l]);
      io::write_f32(out / name, maps[l].data());
      written.push_back(out / name);
    }
  }
  return written;
}

}  // namespace cvar::eval
