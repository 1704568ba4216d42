#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cvar/model/transformer.hpp"
#include "cvar/numerics/tensor.hpp"
#include "cvar/synth/video.hpp"

namespace cvar::loss {

enum class DxKind { PixelL2, DeepEmbed };
enum class DaKind { L2, SymKL, MixtureJS };
enum class Pairing { Matched, AllPairs };

std::string_view to_string(DxKind k);
std::string_view to_string(DaKind k);
std::string_view to_string(Pairing k);
DxKind parse_dx(std::string_view s);  // pixel | embed
DaKind parse_da(std::string_view s);  // l2 | symkl | js
Pairing parse_pairing(std::string_view s);  // matched | all
// "1-4", "2", "1,3" -> sorted layer list
std::vector<int> parse_layers(std::string_view s);
std::string format_layers(const std::vector<int>& layers);

struct LossConfig {
  double alpha = 0.75;
  double beta = 200.0;
  double lambda = 5e-3;
  double epsilon = 1e-8;  // uniform smoothing mass for the KL forms
  DxKind dx = DxKind::DeepEmbed;
  DaKind da = DaKind::SymKL;
  std::vector<int> layers = {1, 2, 3, 4};
  Pairing pairing = Pairing::AllPairs;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// Frozen encoder G: the final-norm CLS state of a small transformer. The
// stored weights are float; evaluation runs on a double copy.
struct EmbedNet {
  model::ModelConfig config;
  model::ParamsF params;
  model::ParamsD frozen;

  EmbedNet() = default;
  EmbedNet(model::ModelConfig cfg, model::ParamsF p);
  std::vector<double> embed(const synth::VideoClip& clip) const;
  std::vector<double> embed(std::span<const float> clip) const;
};

// Pixel form: mean squared difference over T*H*W*C. Clamped at beta.
double d_x_pixel(std::span<const float> a, std::span<const float> b, const LossConfig& cfg);
// Deep form from precomputed embeddings: squared Euclidean distance. Clamped.
double d_x_embedded(const std::vector<double>& ga, const std::vector<double>& gb, const LossConfig& cfg);
double d_x(const synth::VideoClip& a, const synth::VideoClip& b, const LossConfig& cfg,
           const EmbedNet* embed = nullptr);

// Differentiable attention divergence between two 1 x N maps, clamped at beta.
template <typename T>
num::Tensor<T> d_a(const num::Tensor<T>& a, const num::Tensor<T>& b, const LossConfig& cfg);
double d_a(std::span<const double> a, std::span<const double> b, const LossConfig& cfg);

// A map after validation and, for the KL forms, smoothing and its log; reused
// across every pair the map takes part in.
template <typename T>
struct PreparedMap {
  num::Tensor<T> p;
  num::Tensor<T> log_p;  // undefined for the l2 form
};
template <typename T>
PreparedMap<T> prepare_map(const num::Tensor<T>& a, const LossConfig& cfg);
template <typename T>
num::Tensor<T> d_a(const PreparedMap<T>& a, const PreparedMap<T>& b, const LossConfig& cfg);

}  // namespace cvar::loss
