#include "cvar/model/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "cvar/common/error.hpp"
#include "cvar/numerics/ops.hpp"

namespace cvar::model {

using num::Shape;
using num::Tensor;

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("model ") + what + " must be positive");
  };
  positive(frames, "frames");
  positive(height, "height");
  positive(width, "width");
  positive(channels, "channels");
  positive(temporal_patch, "temporal patch");
  positive(patch, "patch");
  positive(dim, "dim");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(classes_exo, "exo class count");
  positive(classes_ego, "ego class count");
  if (frames % temporal_patch != 0) throw ConfigError("model frames must be divisible by temporal patch");
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("model height and width must be divisible by patch");
  }
  if (dim % heads != 0) throw ConfigError("model dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model dropout must be in [0, 1)");
}

namespace {

template <typename T>
Tensor<T> trunc_normal(Rng& rng, Shape shape, double sigma) {
  std::vector<T> v(num::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(sigma));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> zeros(std::size_t n) {
  return Tensor<T>::zeros({n});
}

template <typename T>
Tensor<T> ones(std::size_t n) {
  return Tensor<T>::full({n}, T(1));
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, const ForwardOptions& opt) {
  if (!opt.training || rate <= 0.0) return x;
  if (!opt.rng) throw ConfigError("dropout in training mode needs an rng");
  std::vector<T> mask(x.numel());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = opt.rng->uniform() < rate ? T(0) : keep;
  return num::mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

constexpr double kLnEps = 1e-5;

template <typename T>
Tensor<T> qkv_bias(const BlockParams<T>& b, std::size_t d) {
  const auto row = [d](const Tensor<T>& v) { return num::reshape(v, {1, d}); };
  return num::reshape(num::concat_cols<T>({row(b.b_q), Tensor<T>::zeros({1, d}), row(b.b_v)}), {3 * d});
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x1417));
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto n = static_cast<std::size_t>(cfg.tokens());
  constexpr double sigma = 0.02;
  ModelParams p;
  p.patch_w = trunc_normal<T>(rng, {static_cast<std::size_t>(cfg.patch_size()), d}, sigma);
  p.patch_b = zeros<T>(d);
  p.cls = trunc_normal<T>(rng, {1, d}, sigma);
  p.pos = trunc_normal<T>(rng, {n + 1, d}, sigma);
  for (int l = 0; l < cfg.layers; ++l) {
    BlockParams<T> b;
    b.ln1_g = ones<T>(d);
    b.ln1_b = zeros<T>(d);
    b.w_qkv = trunc_normal<T>(rng, {d, 3 * d}, sigma);
    b.b_q = zeros<T>(d);
    b.b_v = zeros<T>(d);
    b.w_o = trunc_normal<T>(rng, {d, d}, sigma);
    b.b_o = zeros<T>(d);
    b.ln2_g = ones<T>(d);
    b.ln2_b = zeros<T>(d);
    b.w_fc1 = trunc_normal<T>(rng, {d, 4 * d}, sigma);
    b.b_fc1 = zeros<T>(4 * d);
    b.w_fc2 = trunc_normal<T>(rng, {4 * d, d}, sigma);
    b.b_fc2 = zeros<T>(d);
    p.blocks.push_back(std::move(b));
  }
  p.ln_f_g = ones<T>(d);
  p.ln_f_b = zeros<T>(d);
  p.head_exo_w = trunc_normal<T>(rng, {d, static_cast<std::size_t>(cfg.classes_exo)}, sigma);
  p.head_exo_b = zeros<T>(cfg.classes_exo);
  p.head_ego_w = trunc_normal<T>(rng, {d, static_cast<std::size_t>(cfg.classes_ego)}, sigma);
  p.head_ego_b = zeros<T>(cfg.classes_ego);
  p.set_requires_grad(true);
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named() const {
  std::vector<std::pair<std::string, Tensor<T>>> out = {
      {"patch.w", patch_w}, {"patch.b", patch_b}, {"cls", cls}, {"pos", pos}};
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    for (const auto& [name, t] : std::initializer_list<std::pair<const char*, const Tensor<T>&>>{
             {"ln1.g", b.ln1_g}, {"ln1.b", b.ln1_b}, {"qkv.w", b.w_qkv}, {"q.b", b.b_q}, {"v.b", b.b_v},
             {"proj.w", b.w_o}, {"proj.b", b.b_o}, {"ln2.g", b.ln2_g}, {"ln2.b", b.ln2_b},
             {"fc1.w", b.w_fc1}, {"fc1.b", b.b_fc1}, {"fc2.w", b.w_fc2}, {"fc2.b", b.b_fc2}}) {
      out.emplace_back(pre + name, t);
    }
  }
  out.emplace_back("ln_f.g", ln_f_g);
  out.emplace_back("ln_f.b", ln_f_b);
  out.emplace_back("head_exo.w", head_exo_w);
  out.emplace_back("head_exo.b", head_exo_b);
  out.emplace_back("head_ego.w", head_ego_w);
  out.emplace_back("head_ego.b", head_ego_b);
  return out;
}

template <typename T>
std::vector<Tensor<T>> ModelParams<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.numel();
  return n;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool flag) {
  for (auto t : tensors()) t.set_requires_grad(flag);
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto t : tensors()) t.zero_grad();
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> p;
  auto c = [](const Tensor<T>& t) { return t.template cast<U>(); };
  p.patch_w = c(patch_w);
  p.patch_b = c(patch_b);
  p.cls = c(cls);
  p.pos = c(pos);
  for (const auto& b : blocks) {
    p.blocks.push_back({c(b.ln1_g), c(b.ln1_b), c(b.w_qkv), c(b.b_q), c(b.b_v), c(b.w_o), c(b.b_o), c(b.ln2_g),
                        c(b.ln2_b), c(b.w_fc1), c(b.b_fc1), c(b.w_fc2), c(b.b_fc2)});
  }
  p.ln_f_g = c(ln_f_g);
  p.ln_f_b = c(ln_f_b);
  p.head_exo_w = c(head_exo_w);
  p.head_exo_b = c(head_exo_b);
  p.head_ego_w = c(head_ego_w);
  p.head_ego_b = c(head_ego_b);
  return p;
}

template <typename T>
Tensor<T> patchify(std::span<const float> clip, const ModelConfig& cfg) {
  if (clip.size() != cfg.clip_numel()) {
    throw ShapeError("patchify: clip has " + std::to_string(clip.size()) + " values, model expects " +
                     std::to_string(cfg.clip_numel()));
  }
  const int K = cfg.temporal_patch, P = cfg.patch, C = cfg.channels;
  const auto W = static_cast<std::size_t>(cfg.width), H = static_cast<std::size_t>(cfg.height);
  const auto len = static_cast<std::size_t>(cfg.patch_size());
  std::vector<T> out(static_cast<std::size_t>(cfg.tokens()) * len);
  T* dst = out.data();
  for (int s = 0; s < cfg.slots(); ++s)
    for (int r = 0; r < cfg.rows(); ++r)
      for (int c = 0; c < cfg.cols(); ++c)
        for (int k = 0; k < K; ++k)
          for (int y = 0; y < P; ++y) {
            const std::size_t t = static_cast<std::size_t>(s) * K + k;
            const std::size_t row = static_cast<std::size_t>(r) * P + y;
            const float* src = clip.data() + ((t * H + row) * W + static_cast<std::size_t>(c) * P) * C;
            for (int i = 0; i < P * C; ++i) *dst++ = static_cast<T>(src[i]) - static_cast<T>(kPixelMean);
          }
  return Tensor<T>({static_cast<std::size_t>(cfg.tokens()), len}, std::move(out));
}

template <typename T>
Tensor<T> tokenize(const Tensor<T>& patches, const ModelParams<T>& p, const ModelConfig& cfg) {
  if (patches.dim() != 2 || patches.size(0) != static_cast<std::size_t>(cfg.tokens()) ||
      patches.size(1) != static_cast<std::size_t>(cfg.patch_size())) {
    throw ShapeError("tokenize: patch matrix " + num::shape_str(patches.shape()) + " does not match the model");
  }
  const auto embedded = num::add_bias(num::matmul(patches, p.patch_w), p.patch_b);
  return num::add(num::concat_rows<T>({p.cls, embedded}), p.pos);
}

template <typename T>
ForwardOutput<T> forward(const Tensor<T>& patches, const ModelParams<T>& p, const ModelConfig& cfg, View view,
                         const ForwardOptions& opt) {
  const auto n = static_cast<std::size_t>(cfg.tokens()) + 1;
  const auto d = static_cast<std::size_t>(cfg.dim);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const auto dh = d / heads;
  const T inv_sqrt_dh = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const T eps = static_cast<T>(kLnEps);

  ForwardOutput<T> out;
  auto x = tokenize(patches, p, cfg);
  for (const auto& b : p.blocks) {
    const auto h = num::layer_norm(x, b.ln1_g, b.ln1_b, eps);
    const auto qkv = num::add_bias(num::matmul(h, b.w_qkv), qkv_bias(b, d));
    std::vector<Tensor<T>> head_out;
    std::vector<Tensor<T>> weights;
    Tensor<T> cls_sum;
    for (std::size_t i = 0; i < heads; ++i) {
      const auto q = num::slice(qkv, 0, n, i * dh, (i + 1) * dh);
      const auto k = num::slice(qkv, 0, n, d + i * dh, d + (i + 1) * dh);
      const auto v = num::slice(qkv, 0, n, 2 * d + i * dh, 2 * d + (i + 1) * dh);
      const auto a = num::softmax(num::scale(num::matmul(q, num::transpose(k)), inv_sqrt_dh), 1);
      const auto cls_row = num::slice(a, 0, 1, 1, n);
      cls_sum = cls_sum.defined() ? num::add(cls_sum, cls_row) : cls_row;
      head_out.push_back(num::matmul(a, v));
      if (opt.keep_weights) weights.push_back(a);
    }
    // Averaging over heads is a uniform scale, which renormalization absorbs;
    // the explicit scale keeps the intermediate meaningful.
    out.attention.push_back(num::normalize(num::scale(cls_sum, static_cast<T>(1.0 / heads))));
    if (opt.keep_weights) out.weights.push_back(std::move(weights));
    const auto attn = num::add_bias(num::matmul(num::concat_cols(head_out), b.w_o), b.b_o);
    x = num::add(x, dropout(attn, cfg.dropout, opt));
    const auto h2 = num::layer_norm(x, b.ln2_g, b.ln2_b, eps);
    const auto mlp = num::add_bias(
        num::matmul(num::gelu(num::add_bias(num::matmul(h2, b.w_fc1), b.b_fc1)), b.w_fc2), b.b_fc2);
    x = num::add(x, dropout(mlp, cfg.dropout, opt));
  }
  out.feature = num::layer_norm(num::slice(x, 0, 1, 0, d), p.ln_f_g, p.ln_f_b, eps);
  const bool exo = view == View::Exo;
  out.logits = num::add_bias(num::matmul(out.feature, exo ? p.head_exo_w : p.head_ego_w),
                             exo ? p.head_exo_b : p.head_ego_b);
  return out;
}

template <typename T>
ForwardOutput<T> forward(const synth::VideoClip& clip, const ModelParams<T>& p, const ModelConfig& cfg,
                         View view, const ForwardOptions& opt) {
  if (clip.frames != cfg.frames || clip.height != cfg.height || clip.width != cfg.width ||
      clip.channels != cfg.channels) {
    throw ShapeError("forward: clip " + std::to_string(clip.frames) + "x" + std::to_string(clip.height) + "x" +
                     std::to_string(clip.width) + "x" + std::to_string(clip.channels) +
                     " does not match the model input");
  }
  return forward(patchify<T>(clip.data, cfg), p, cfg, view, opt);
}

template <typename T>
std::vector<Tensor<T>> extract_attention(const ForwardOutput<T>& out, std::vector<int> layers) {
  if (layers.empty()) throw ConfigError("attention layer subset must not be empty");
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  std::vector<Tensor<T>> maps;
  for (int l : layers) {
    if (l < 1 || l > static_cast<int>(out.attention.size())) {
      throw ConfigError("attention layer " + std::to_string(l) + " outside 1.." +
                        std::to_string(out.attention.size()));
    }
    maps.push_back(out.attention[l - 1]);
  }
  return maps;
}

synth::VideoClip crop(const synth::VideoClip& clip, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > clip.height ||
      left + width > clip.width) {
    throw ShapeError("crop window outside the " + std::to_string(clip.height) + "x" +
                     std::to_string(clip.width) + " clip");
  }
  synth::VideoClip out = clip;
  out.height = height;
  out.width = width;
  out.data.resize(out.numel());
  float* dst = out.data.data();
  const auto row_len = static_cast<std::size_t>(width) * clip.channels;
  for (int t = 0; t < clip.frames; ++t)
    for (int y = 0; y < height; ++y) {
      const float* src = clip.data.data() +
                         ((static_cast<std::size_t>(t) * clip.height + top + y) * clip.width + left) * clip.channels;
      dst = std::copy_n(src, row_len, dst);
    }
  // Intrinsics follow the window: shift the principal point.
  for (auto& rig : out.rigs) {
    rig.K(0, 2) -= left;
    rig.K(1, 2) -= top;
  }
  return out;
}

synth::VideoClip center_crop(const synth::VideoClip& clip, int height, int width) {
  return crop(clip, (clip.height - height) / 2, (clip.width - width) / 2, height, width);
}

#define CVAR_INSTANTIATE_MODEL(T)                                                                      \
  template struct ModelParams<T>;                                                                      \
  template Tensor<T> patchify<T>(std::span<const float>, const ModelConfig&);                          \
  template Tensor<T> tokenize(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&);            \
  template ForwardOutput<T> forward(const Tensor<T>&, const ModelParams<T>&, const ModelConfig&, View,  \
                                    const ForwardOptions&);                                            \
  template ForwardOutput<T> forward(const synth::VideoClip&, const ModelParams<T>&, const ModelConfig&, \
                                    View, const ForwardOptions&);                                      \
  template std::vector<Tensor<T>> extract_attention(const ForwardOutput<T>&, std::vector<int>);

CVAR_INSTANTIATE_MODEL(float)
CVAR_INSTANTIATE_MODEL(double)

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

}  // namespace cvar::model
