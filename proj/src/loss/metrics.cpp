#include "cvar/loss/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cvar/common/error.hpp"
#include "cvar/numerics/ops.hpp"

namespace cvar::loss {

namespace {

int parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError("bad layer number '" + std::string(s) + "'");
  return v;
}

template <typename T>
void check_map(const num::Tensor<T>& a) {
  if (!a.defined() || a.dim() != 2 || a.size(0) != 1 || a.numel() == 0)
    throw ShapeError("attention map must be 1 x N");
  for (T v : a.data())
    if (!(v >= T(0)) || !std::isfinite(static_cast<double>(v)))
      throw NumericError("attention map has a negative or non-finite entry");
}

}  // namespace

std::string_view to_string(DxKind k) { return k == DxKind::PixelL2 ? "pixel" : "embed"; }

std::string_view to_string(DaKind k) {
  switch (k) {
    case DaKind::L2: return "l2";
    case DaKind::SymKL: return "symkl";
    case DaKind::MixtureJS: return "js";
  }
  return "?";
}

std::string_view to_string(Pairing k) { return k == Pairing::Matched ? "matched" : "all"; }

DxKind parse_dx(std::string_view s) {
  if (s == "pixel") return DxKind::PixelL2;
  if (s == "embed") return DxKind::DeepEmbed;
  throw ConfigError("dx must be pixel or embed, got '" + std::string(s) + "'");
}

DaKind parse_da(std::string_view s) {
  if (s == "l2") return DaKind::L2;
  if (s == "symkl") return DaKind::SymKL;
  if (s == "js") return DaKind::MixtureJS;
  throw ConfigError("da must be l2, symkl or js, got '" + std::string(s) + "'");
}

Pairing parse_pairing(std::string_view s) {
  if (s == "matched") return Pairing::Matched;
  if (s == "all") return Pairing::AllPairs;
  throw ConfigError("pairing must be matched or all, got '" + std::string(s) + "'");
}

std::vector<int> parse_layers(std::string_view s) {
  std::vector<int> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    std::string_view item = s.substr(0, comma);
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw ConfigError("empty entry in layer list");
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_int(item));
    } else {
      const int lo = parse_int(item.substr(0, dash)), hi = parse_int(item.substr(dash + 1));
      if (lo > hi) throw ConfigError("descending layer range");
      for (int l = lo; l <= hi; ++l) out.push_back(l);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw ConfigError("layer list is empty");
  return out;
}

std::string format_layers(const std::vector<int>& layers) {
  if (layers.empty()) return "";
  bool contiguous = true;
  for (std::size_t i = 1; i < layers.size(); ++i) contiguous &= layers[i] == layers[i - 1] + 1;
  if (contiguous)
    return layers.size() == 1 ? std::to_string(layers[0])
                              : std::to_string(layers.front()) + "-" + std::to_string(layers.back());
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) os << (i ? "," : "") << layers[i];
  return os.str();
}

void LossConfig::validate() const {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(beta > 0) || !std::isfinite(beta)) throw ConfigError("beta must be > 0");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(epsilon > 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be > 0");
  if (layers.empty()) throw ConfigError("layer subset is empty");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] < 1) throw ConfigError("layers are 1-based");
    if (i && layers[i] <= layers[i - 1]) throw ConfigError("layers must be ascending and unique");
  }
}

EmbedNet::EmbedNet(model::ModelConfig cfg, model::ParamsF p) : config(std::move(cfg)), params(std::move(p)) {
  config.validate();
  params.set_requires_grad(false);
  frozen = params.cast<double>();
  frozen.set_requires_grad(false);
}

std::vector<double> EmbedNet::embed(std::span<const float> clip) const {
  if (clip.size() != config.clip_numel()) throw ShapeError("clip size does not match the embedding network");
  if (frozen.blocks.size() != static_cast<std::size_t>(config.layers))
    throw ConfigError("embedding network was not frozen");
  const auto patches = model::patchify<double>(clip, config);
  const auto out = model::forward(patches, frozen, config, model::View::Exo);
  std::vector<double> g(out.feature.data().begin(), out.feature.data().end());
  for (double v : g)
    if (!std::isfinite(v)) throw NumericError("embedding is not finite");
  return g;
}

std::vector<double> EmbedNet::embed(const synth::VideoClip& clip) const {
  if (clip.frames != config.frames || clip.height != config.height || clip.width != config.width ||
      clip.channels != config.channels)
    throw ShapeError("clip dimensions do not match the embedding network");
  return embed(std::span<const float>(clip.data));
}

double d_x_pixel(std::span<const float> a, std::span<const float> b, const LossConfig& cfg) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("d_x: clip sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::min(s / static_cast<double>(a.size()), cfg.beta);
}

double d_x_embedded(const std::vector<double>& ga, const std::vector<double>& gb, const LossConfig& cfg) {
  if (ga.size() != gb.size() || ga.empty()) throw ShapeError("d_x: embedding sizes differ");
  double s = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) s += (ga[i] - gb[i]) * (ga[i] - gb[i]);
  return std::min(s, cfg.beta);
}

double d_x(const synth::VideoClip& a, const synth::VideoClip& b, const LossConfig& cfg, const EmbedNet* embed) {
  if (a.frames != b.frames || a.height != b.height || a.width != b.width || a.channels != b.channels ||
      a.data.size() != b.data.size())
    throw ShapeError("d_x: clip shapes differ");
  if (cfg.dx == DxKind::PixelL2) return d_x_pixel(a.data, b.data, cfg);
  if (!embed) throw ConfigError("deep-embed d_x needs an embedding network");
  return d_x_embedded(embed->embed(a), embed->embed(b), cfg);
}

template <typename T>
PreparedMap<T> prepare_map(const num::Tensor<T>& a, const LossConfig& cfg) {
  check_map(a);
  if (cfg.da == DaKind::L2) return {a, {}};
  auto p = num::normalize(num::add_scalar(a, static_cast<T>(cfg.epsilon)));
  return {p, num::log(p)};
}

template <typename T>
num::Tensor<T> d_a(const PreparedMap<T>& a, const PreparedMap<T>& b, const LossConfig& cfg) {
  if (a.p.shape() != b.p.shape()) throw ShapeError("d_a: map shapes differ");
  num::Tensor<T> raw;
  switch (cfg.da) {
    case DaKind::L2: {
      const auto diff = num::sub(a.p, b.p);
      raw = num::sum(num::mul(diff, diff));
      break;
    }
    case DaKind::SymKL:
      // 0.5 (KL(p||q) + KL(q||p)) collapses to 0.5 sum (p - q)(log p - log q).
      raw = num::scale(num::sum(num::mul(num::sub(a.p, b.p), num::sub(a.log_p, b.log_p))), T(0.5));
      break;
    case DaKind::MixtureJS: {
      const auto m = num::scale(num::add(a.p, b.p), T(0.5));
      const auto log_m = num::log(m);
      const auto kl_a = num::sum(num::mul(a.p, num::sub(a.log_p, log_m)));
      const auto kl_b = num::sum(num::mul(b.p, num::sub(b.log_p, log_m)));
      raw = num::scale(num::add(kl_a, kl_b), T(0.5));
      break;
    }
  }
  // Roundoff can leave a divergence a hair below zero.
  return num::clamp_max(num::clamp_min(raw, T(0)), static_cast<T>(cfg.beta));
}

template <typename T>
num::Tensor<T> d_a(const num::Tensor<T>& a, const num::Tensor<T>& b, const LossConfig& cfg) {
  return d_a(prepare_map(a, cfg), prepare_map(b, cfg), cfg);
}

double d_a(std::span<const double> a, std::span<const double> b, const LossConfig& cfg) {
  const num::TensorD ta({1, a.size()}, {a.begin(), a.end()});
  const num::TensorD tb({1, b.size()}, {b.begin(), b.end()});
  return d_a(ta, tb, cfg).item();
}

#define CVAR_INSTANTIATE_METRICS(T)                                                              \
  template PreparedMap<T> prepare_map(const num::Tensor<T>&, const LossConfig&);                 \
  template num::Tensor<T> d_a(const PreparedMap<T>&, const PreparedMap<T>&, const LossConfig&); \
  template num::Tensor<T> d_a(const num::Tensor<T>&, const num::Tensor<T>&, const LossConfig&);

CVAR_INSTANTIATE_METRICS(float)
CVAR_INSTANTIATE_METRICS(double)

}  // namespace cvar::loss
