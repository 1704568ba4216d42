#include "cvar/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cvar/common/error.hpp"
#include "cvar/numerics/ops.hpp"

namespace cvar::train {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x7a11;
constexpr std::uint64_t kDropoutStream = 0xd409;
constexpr std::uint64_t kEmbedStream = 0xe3bd;
constexpr std::uint64_t kAugmentStream = 0xa06d;

// Heavy-ball SGD on the globally norm-clipped gradient.
void sgd_step(model::ParamsF& params, std::vector<std::vector<float>>& velocity, double lr, double momentum,
              double clip_norm) {
  auto tensors = params.tensors();
  if (velocity.size() != tensors.size()) throw ShapeError("optimizer state does not match parameters");
  double sq = 0;
  for (const auto& t : tensors)
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  const auto gs = static_cast<float>(clip_norm > 0 && norm > clip_norm ? clip_norm / norm : 1.0);
  const auto mu = static_cast<float>(momentum), rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto w = tensors[i].mutable_data();
    const auto g = tensors[i].grad();
    auto& v = velocity[i];
    if (v.size() != w.size()) throw ShapeError("optimizer state does not match parameters");
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = mu * v[k] + (g.empty() ? 0.0f : gs * g[k]);
      w[k] -= rate * v[k];
    }
  }
}

std::vector<std::vector<float>> zero_velocity(const model::ParamsF& params) {
  std::vector<std::vector<float>> v;
  for (const auto& t : params.tensors()) v.emplace_back(t.numel(), 0.0f);
  return v;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

loss::DxTable batch_dx(const TrainData& data, std::span<const std::size_t> ie, std::span<const std::size_t> ig,
                       const loss::LossConfig& cfg) {
  loss::DxTable t(ie.size(), std::vector<double>(ig.size()));
  for (std::size_t a = 0; a < ie.size(); ++a)
    for (std::size_t b = 0; b < ig.size(); ++b)
      t[a][b] = cfg.dx == loss::DxKind::DeepEmbed
                    ? loss::d_x_embedded(data.exo.embed[ie[a]], data.ego.embed[ig[b]], cfg)
                    : loss::d_x_pixel(data.exo.pixels[ie[a]], data.ego.pixels[ig[b]], cfg);
  return t;
}

void write_dump(const fs::path& dir, const StepMetrics& m, const TrainData& data, std::span<const std::size_t> ie,
                std::span<const std::size_t> ig) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream out(dir / ("nonfinite_step" + std::to_string(m.step) + ".txt"));
  out << "step " << m.step << "\nepoch " << m.epoch << "\nlr " << m.lr << "\nce_exo " << m.ce_exo << "\nce_ego "
      << m.ce_ego << "\nl_self " << m.l_self << "\n";
  out << "exo_scenes";
  for (auto i : ie) out << ' ' << data.exo.scenes[i];
  out << "\nego_scenes";
  for (auto i : ig) out << ' ' << data.ego.scenes[i];
  out << "\n";
}

bool batch_has_scene(std::span<const std::size_t> exo_order, const TrainData& data, std::size_t lo,
                     std::size_t hi, std::uint64_t scene) {
  for (std::size_t k = lo; k < hi; ++k)
    if (data.exo.scenes[exo_order[k]] == scene) return true;
  return false;
}

// Swaps ego entries between batches until no batch holds both views of a
// scene. Draws nothing from `rng` when the shuffle is already clean, which is
// always the case for an unpaired split.
void separate_scenes(const std::vector<std::size_t>& exo_order, std::vector<std::size_t>& ego_order,
                     const TrainData& data, std::size_t n, std::size_t batch, Rng& rng) {
  auto lo_of = [&](std::size_t p) { return p / batch * batch; };
  auto hi_of = [&](std::size_t p) { return std::min(n, lo_of(p) + batch); };
  auto clashes = [&](std::size_t p, std::size_t ego) {
    return batch_has_scene(exo_order, data, lo_of(p), hi_of(p), data.ego.scenes[ego]);
  };
  for (std::size_t p = 0; p < n; ++p) {
    if (!clashes(p, ego_order[p])) continue;
    const std::size_t start = rng.below(n);
    bool fixed = false;
    for (std::size_t k = 0; k < n && !fixed; ++k) {
      const std::size_t q = (start + k) % n;
      if (lo_of(q) == lo_of(p)) continue;
      if (clashes(p, ego_order[q]) || clashes(q, ego_order[p])) continue;
      std::swap(ego_order[p], ego_order[q]);
      fixed = true;
    }
    if (!fixed)
      throw ConfigError("cannot form unpaired batches: scene " + std::to_string(data.ego.scenes[ego_order[p]]) +
                        " appears in every batch");
  }
}

void save_atomic(const fs::path& path, const model::Checkpoint& ckpt) {
  const auto tmp = fs::path(path).concat(".tmp");
  model::save_checkpoint(tmp, ckpt);
  fs::rename(tmp, path);
}

}  // namespace

ViewData prepare_view(const std::vector<synth::VideoClip>& clips, const model::ModelConfig& mcfg,
                      const loss::LossConfig& lcfg, const loss::EmbedNet* embed) {
  if (lcfg.dx == loss::DxKind::DeepEmbed && !embed) throw ConfigError("deep-embed d_x needs an embedding network");
  ViewData v;
  for (const auto& clip : clips) {
    if (clip.frames != mcfg.frames) throw ConfigError("clip length does not match the model");
    const auto c = model::center_crop(clip, mcfg.height, mcfg.width);
    v.patches.push_back(model::patchify<float>(c.data, mcfg));
    v.labels.push_back(c.label);
    v.scenes.push_back(c.scene_id);
    if (lcfg.dx == loss::DxKind::DeepEmbed) v.embed.push_back(embed->embed(c));
    v.pixels.push_back(c.data);
  }
  return v;
}

TrainState init_state(const TrainConfig& cfg) {
  auto mcfg = cfg.model;
  mcfg.seed = mix_seed(cfg.seed, cfg.model.seed, kInitStream);
  TrainState s;
  s.params = model::ParamsF::init(mcfg);
  s.params.set_requires_grad(true);
  s.velocity = zero_velocity(s.params);
  s.rng = Rng(mix_seed(cfg.seed, kShuffleStream));
  return s;
}

std::size_t steps_per_epoch(const TrainData& data, int batch) {
  const std::size_t n = std::min(data.exo.size(), data.ego.size());
  return (n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch);
}

std::vector<float> augment_clip(std::span<const float> clip, const model::ModelConfig& mcfg, Rng& rng) {
  if (clip.size() != mcfg.clip_numel()) throw ShapeError("augment_clip: clip does not match the model window");
  const bool flip = rng.below(2) == 1;
  const int shift = static_cast<int>(rng.below(3)) - 1;
  const int T = mcfg.frames, H = mcfg.height, W = mcfg.width, C = mcfg.channels;
  std::vector<float> out(clip.size());
  for (int t = 0; t < T; ++t) {
    const int st = std::clamp(t + shift, 0, T - 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sx = flip ? W - 1 - x : x;
        const auto src = ((static_cast<std::size_t>(st) * H + y) * W + sx) * C;
        const auto dst = ((static_cast<std::size_t>(t) * H + y) * W + x) * C;
        for (int c = 0; c < C; ++c) out[dst + c] = clip[src + c];
      }
  }
  return out;
}

EpochMetrics train_epoch(TrainState& state, const TrainData& data, const TrainConfig& cfg,
                         const std::function<void(const StepMetrics&)>& on_step, const fs::path& dump_dir) {
  const std::size_t n = std::min(data.exo.size(), data.ego.size());
  if (n == 0) throw ConfigError("training split is empty");
  if (!cfg.unpaired && data.exo.size() != data.ego.size())
    throw ConfigError("paired training needs equally sized views");
  const std::size_t spe = steps_per_epoch(data, cfg.batch);
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.epochs) * spe;

  std::vector<std::size_t> exo_order(data.exo.size()), ego_order(data.ego.size());
  std::iota(exo_order.begin(), exo_order.end(), 0);
  std::iota(ego_order.begin(), ego_order.end(), 0);
  state.rng.shuffle(exo_order.begin(), exo_order.end());
  if (cfg.unpaired) {
    state.rng.shuffle(ego_order.begin(), ego_order.end());
    separate_scenes(exo_order, ego_order, data, n, static_cast<std::size_t>(cfg.batch), state.rng);
  } else {
    ego_order = exo_order;
  }

  EpochMetrics em;
  em.epoch = state.epoch + 1;
  const auto B = static_cast<std::size_t>(cfg.batch);
  for (std::size_t k = 0; k < spe; ++k) {
    const std::size_t lo = k * B, hi = std::min(n, lo + B);
    const std::span<const std::size_t> ie(exo_order.data() + lo, hi - lo), ig(ego_order.data() + lo, hi - lo);

    if (cfg.unpaired)
      for (auto e : ie)
        for (auto g : ig)
          if (data.exo.scenes[e] == data.ego.scenes[g])
            throw std::logic_error("unpaired batch holds both views of scene " + std::to_string(data.exo.scenes[e]));

    loss::ViewBatch<float> exo{gather(data.exo.patches, ie), gather(data.exo.labels, ie)};
    loss::ViewBatch<float> ego{gather(data.ego.patches, ig), gather(data.ego.labels, ig)};
    if (cfg.augment) {
      Rng aug(mix_seed(cfg.seed, kAugmentStream, state.step));
      for (std::size_t i = 0; i < ie.size(); ++i)
        exo.patches[i] = model::patchify<float>(augment_clip(data.exo.pixels[ie[i]], cfg.model, aug), cfg.model);
      for (std::size_t i = 0; i < ig.size(); ++i)
        ego.patches[i] = model::patchify<float>(augment_clip(data.ego.pixels[ig[i]], cfg.model, aug), cfg.model);
    }
    const auto dx = cfg.self_loss && cfg.loss.lambda > 0 ? batch_dx(data, ie, ig, cfg.loss) : loss::DxTable{};

    StepMetrics m;
    m.step = state.step;
    m.epoch = em.epoch;
    m.lr = cosine_lr(state.step, std::max<std::uint64_t>(total, state.step + 1), cfg.lr);

    Rng dropout(mix_seed(cfg.seed, kDropoutStream, state.step));
    model::ForwardOptions fo{true, &dropout, false};
    state.params.zero_grad();
    num::GradTape<float> tape;
    const auto terms = loss::total_objective(exo, ego, dx, state.params, cfg.model, cfg.loss, fo, cfg.self_loss);
    m.ce_exo = terms.ce_exo.item();
    m.ce_ego = terms.ce_ego.item();
    m.l_self = terms.l_self.item();
    m.total = terms.total.item();
    if (!std::isfinite(m.total)) {
      write_dump(dump_dir, m, data, ie, ig);
      std::ostringstream msg;
      msg << "non-finite loss at step " << m.step << " (epoch " << m.epoch << ")";
      throw NumericError(msg.str());
    }
    tape.backward(terms.total);
    sgd_step(state.params, state.velocity, m.lr, cfg.momentum, cfg.clip_norm);
    ++state.step;

    em.ce_exo += m.ce_exo;
    em.ce_ego += m.ce_ego;
    em.l_self += m.l_self;
    em.total += m.total;
    ++em.steps;
    if (on_step) on_step(m);
  }
  const double inv = 1.0 / static_cast<double>(em.steps);
  em.ce_exo *= inv;
  em.ce_ego *= inv;
  em.l_self *= inv;
  em.total *= inv;
  ++state.epoch;
  return em;
}

model::ModelConfig embed_config(const TrainConfig& cfg) {
  auto e = cfg.model;
  e.layers = cfg.embed_layers;
  e.dropout = 0.0;
  e.seed = mix_seed(cfg.seed, cfg.model.seed, kEmbedStream);
  return e;
}

loss::EmbedNet pretrain_embed(const ViewData& exo, const TrainConfig& cfg, std::ostream* log) {
  if (exo.size() == 0) throw ConfigError("pretrain_embed: exo split is empty");
  const auto ecfg = embed_config(cfg);
  auto params = model::ParamsF::init(ecfg);
  if (cfg.embed_epochs == 0) {
    if (log) *log << "embed: 0 epochs, using a frozen random encoder\n";
    return {ecfg, params};
  }
  params.set_requires_grad(true);
  auto velocity = zero_velocity(params);
  Rng rng(mix_seed(ecfg.seed, kShuffleStream));
  const auto B = static_cast<std::size_t>(cfg.batch);
  const std::size_t spe = (exo.size() + B - 1) / B;
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.embed_epochs) * spe;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(exo.size());
  for (int epoch = 1; epoch <= cfg.embed_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    double ce_sum = 0;
    for (std::size_t k = 0; k < spe; ++k, ++step) {
      const std::size_t lo = k * B, hi = std::min(exo.size(), lo + B);
      std::vector<num::TensorF> logits;
      std::vector<int> labels;
      params.zero_grad();
      num::GradTape<float> tape;
      for (std::size_t i = lo; i < hi; ++i) {
        logits.push_back(model::forward(exo.patches[order[i]], params, ecfg, model::View::Exo).logits);
        labels.push_back(exo.labels[order[i]]);
      }
      const auto ce = num::cross_entropy(num::concat_rows(logits), std::span<const int>(labels));
      if (!std::isfinite(ce.item())) throw NumericError("non-finite loss while pretraining the embedding network");
      tape.backward(ce);
      sgd_step(params, velocity, cosine_lr(step, total, cfg.embed_lr), cfg.momentum, cfg.clip_norm);
      ce_sum += ce.item();
    }
    if (log) *log << "embed epoch " << epoch << "/" << cfg.embed_epochs << " ce " << ce_sum / spe << "\n";
  }
  params.set_requires_grad(false);
  params.zero_grad();
  return {ecfg, params};
}

model::Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg) {
  model::Checkpoint c;
  c.config = cfg.model;
  c.params = model::to_blocks(state.params);
  for (std::size_t i = 0; i < c.params.size(); ++i)
    c.velocity.push_back({c.params[i].name, c.params[i].shape, state.velocity.at(i)});
  c.step = state.step;
  c.epoch = static_cast<std::uint64_t>(state.epoch);
  c.rng_state = state.rng.state();
  c.metadata = to_text(cfg);
  return c;
}

TrainState from_checkpoint(const model::Checkpoint& ckpt) {
  TrainState s;
  s.params = model::from_blocks(ckpt.config, ckpt.params);
  s.params.set_requires_grad(true);
  const auto names = s.params.named();
  if (ckpt.velocity.size() != names.size()) throw FormatError("checkpoint optimizer state is incomplete");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (ckpt.velocity[i].name != names[i].first || ckpt.velocity[i].data.size() != names[i].second.numel())
      throw FormatError("checkpoint optimizer block mismatch at " + names[i].first);
    s.velocity.push_back(ckpt.velocity[i].data);
  }
  s.step = ckpt.step;
  s.epoch = static_cast<int>(ckpt.epoch);
  s.rng.set_state(ckpt.rng_state);
  return s;
}

std::string format_metrics_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%d,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(m.step), m.epoch,
                m.lr, m.ce_exo, m.ce_ego, m.l_self, m.total);
  return buf;
}

TrainConfig align_to_dataset(TrainConfig cfg, const synth::DatasetManifest& manifest) {
  const auto& d = manifest.config;
  cfg.dataset = d;
  cfg.model.classes_exo = cfg.model.classes_ego = d.classes;
  cfg.model.frames = d.frames;
  if (cfg.model.height > d.size || cfg.model.width > d.size)
    throw ConfigError("model window " + std::to_string(cfg.model.height) + " exceeds rendered size " +
                      std::to_string(d.size));
  return cfg;
}

RunResult run_training(TrainConfig cfg, const synth::Dataset& data, const RunOptions& opt) {
  cfg = align_to_dataset(std::move(cfg), data.manifest);
  cfg.validate();
  const bool writing = !opt.out.empty();
  if (writing) {
    fs::create_directories(opt.out);
    save_config(opt.out / "config.txt", cfg);
  }
  RunResult r;

  const bool need_embed = cfg.loss.dx == loss::DxKind::DeepEmbed;
  if (need_embed) {
    const auto path = opt.out / "embed.ckpt";
    if (writing && opt.resume && fs::exists(path)) {
      const auto ck = model::load_checkpoint(path);
      r.embed = loss::EmbedNet(ck.config, model::from_blocks(ck.config, ck.params));
    } else {
      const auto ecfg = embed_config(cfg);
      const auto exo = prepare_view(data.train.exo, ecfg, loss::LossConfig{.dx = loss::DxKind::PixelL2}, nullptr);
      r.embed = pretrain_embed(exo, cfg, opt.log);
      if (writing) {
        model::Checkpoint ck;
        ck.config = r.embed.config;
        ck.params = model::to_blocks(r.embed.params);
        ck.metadata = "frozen embedding network";
        save_atomic(path, ck);
      }
    }
  }

  TrainData td;
  td.exo = prepare_view(data.train.exo, cfg.model, cfg.loss, need_embed ? &r.embed : nullptr);
  td.ego = prepare_view(data.train.ego, cfg.model, cfg.loss, need_embed ? &r.embed : nullptr);

  const auto ckpt_path = opt.out / "model.ckpt";
  const auto csv_path = opt.out / "metrics.csv";
  if (writing && opt.resume && fs::exists(ckpt_path)) {
    const auto ck = model::load_checkpoint(ckpt_path);
    if (ck.metadata != to_text(cfg)) throw ConfigError("cannot resume: checkpoint was written under a different config");
    r.state = from_checkpoint(ck);
    // Keep only the rows the checkpoint already accounts for.
    std::ifstream in(csv_path);
    std::vector<std::string> kept;
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("metrics.csv is missing its header");
    while (std::getline(in, line))
      if (std::stoull(line.substr(0, line.find(','))) < r.state.step) kept.push_back(line);
    in.close();
    std::ofstream out(csv_path, std::ios::trunc);
    out << kMetricsHeader << "\n";
    for (const auto& l : kept) out << l << "\n";
  } else {
    r.state = init_state(cfg);
    if (writing) std::ofstream(csv_path, std::ios::trunc) << kMetricsHeader << "\n";
  }

  std::ofstream csv;
  if (writing) csv.open(csv_path, std::ios::app);
  while (r.state.epoch < cfg.epochs) {
    const auto em = train_epoch(
        r.state, td, cfg,
        [&](const StepMetrics& m) {
          r.steps.push_back(m);
          if (writing) csv << format_metrics_row(m) << "\n";
        },
        writing ? opt.out : fs::path{});
    r.epochs.push_back(em);
    if (writing) {
      csv.flush();
      const auto ck = to_checkpoint(r.state, cfg);
      save_atomic(ckpt_path, ck);
      if (cfg.checkpoint_every > 0 && r.state.epoch % cfg.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "model_e%03d.ckpt", r.state.epoch);
        save_atomic(opt.out / name, ck);
      }
    }
    if (opt.log)
      *opt.log << "epoch " << em.epoch << "/" << cfg.epochs << " ce_exo " << em.ce_exo << " ce_ego " << em.ce_ego
               << " l_self " << em.l_self << " total " << em.total << "\n";
    if (opt.stop_after_epoch >= 0 && r.state.epoch >= opt.stop_after_epoch) break;
  }
  return r;
}

}  // namespace cvar::train
