#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cvar/common/rng.hpp"
#include "cvar/numerics/tensor.hpp"
#include "cvar/synth/video.hpp"

namespace cvar::model {

using synth::View;

struct ModelConfig {
  int frames = 8;
  int height = 32;
  int width = 32;
  int channels = 3;
  int temporal_patch = 2;  // K
  int patch = 8;           // P
  int dim = 64;
  int layers = 4;
  int heads = 4;
  int classes_exo = 8;
  int classes_ego = 8;
  double dropout = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  int slots() const { return frames / temporal_patch; }
  int rows() const { return height / patch; }
  int cols() const { return width / patch; }
  int tokens() const { return slots() * rows() * cols(); }  // N, excluding CLS
  int patch_size() const { return temporal_patch * patch * patch * channels; }
  std::size_t clip_numel() const {
    return static_cast<std::size_t>(frames) * height * width * channels;
  }
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct BlockParams {
  num::Tensor<T> ln1_g, ln1_b;
  num::Tensor<T> w_qkv;  // d x 3d, columns [q | k | v], heads contiguous within each
  // No key bias: it shifts every score in a row equally, which softmax cancels.
  num::Tensor<T> b_q, b_v;
  num::Tensor<T> w_o, b_o;
  num::Tensor<T> ln2_g, ln2_b;
  num::Tensor<T> w_fc1, b_fc1;
  num::Tensor<T> w_fc2, b_fc2;
};

template <typename T>
struct ModelParams {
  num::Tensor<T> patch_w, patch_b;  // (K*P*P*C) x d
  num::Tensor<T> cls;               // 1 x d
  num::Tensor<T> pos;               // (N+1) x d, row 0 for CLS
  std::vector<BlockParams<T>> blocks;
  num::Tensor<T> ln_f_g, ln_f_b;
  num::Tensor<T> head_exo_w, head_exo_b;
  num::Tensor<T> head_ego_w, head_ego_b;

  static ModelParams init(const ModelConfig& cfg);

  // Stable, unique names in a fixed order; the order defines checkpoints.
  std::vector<std::pair<std::string, num::Tensor<T>>> named() const;
  std::vector<num::Tensor<T>> tensors() const;
  std::size_t count() const;
  void set_requires_grad(bool flag);
  void zero_grad();
  // Deep copy into another precision; gradients are not copied.
  template <typename U>
  ModelParams<U> cast() const;
  ModelParams clone() const { return cast<T>(); }
};

struct ForwardOptions {
  bool training = false;     // enables dropout
  Rng* rng = nullptr;        // dropout masks; required when training with dropout > 0
  bool keep_weights = false; // keep every head's full softmax matrix
};

template <typename T>
struct ForwardOutput {
  num::Tensor<T> logits;                  // 1 x classes of the selected head
  num::Tensor<T> feature;                 // 1 x d, final-norm CLS state
  // One map per layer: 1 x N, head-averaged CLS->patch attention with the CLS
  // column dropped and renormalized. Cell order matches synth::TokenGrid.
  std::vector<num::Tensor<T>> attention;
  std::vector<std::vector<num::Tensor<T>>> weights;  // [layer][head], (N+1) x (N+1)
};

// Subtracted from every pixel before the patch projection. Uncentred [0, 1]
// inputs leave SGD stuck at chance on the synthetic benchmark.
inline constexpr float kPixelMean = 0.5f;

// Rearranges a T x H x W x C clip into N rows of K*P*P*C centred patch
// values, ordered slot-major then row then column; within a patch,
// frame-major then y, x, channel.
template <typename T>
num::Tensor<T> patchify(std::span<const float> clip, const ModelConfig& cfg);

// N+1 token embeddings: CLS followed by projected patches, positions added.
template <typename T>
num::Tensor<T> tokenize(const num::Tensor<T>& patches, const ModelParams<T>& params,
                        const ModelConfig& cfg);

template <typename T>
ForwardOutput<T> forward(const num::Tensor<T>& patches, const ModelParams<T>& params,
                         const ModelConfig& cfg, View view, const ForwardOptions& opt = {});
template <typename T>
ForwardOutput<T> forward(const synth::VideoClip& clip, const ModelParams<T>& params,
                         const ModelConfig& cfg, View view, const ForwardOptions& opt = {});

// Maps for the given 1-based layers, ascending and deduplicated.
template <typename T>
std::vector<num::Tensor<T>> extract_attention(const ForwardOutput<T>& out, std::vector<int> layers);

// Window of a clip; used for centre and corner crops.
synth::VideoClip crop(const synth::VideoClip& clip, int top, int left, int height, int width);
synth::VideoClip center_crop(const synth::VideoClip& clip, int height, int width);

using ParamsF = ModelParams<float>;
using ParamsD = ModelParams<double>;

}  // namespace cvar::model
