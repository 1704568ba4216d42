#pragma once

// Straight-line double-precision re-implementation of the video transformer,
// written with plain loops and no autodiff, for cross-checking the model.

#include <cmath>
#include <vector>

#include "cvar/model/transformer.hpp"

namespace cvar::testing {

struct ReferenceOutput {
  std::vector<double> logits;
  std::vector<double> feature;  // final-norm CLS state
  std::vector<std::vector<double>> attention;  // per layer, N values
};

namespace ref {

using Mat = std::vector<std::vector<double>>;

template <typename T>
std::vector<double> vec(const num::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

template <typename T>
Mat mat(const num::Tensor<T>& t) {
  Mat m(t.size(0), std::vector<double>(t.size(1)));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = t.at(i * t.size(1) + j);
  return m;
}

inline Mat linear(const Mat& x, const Mat& w, const std::vector<double>& b) {
  Mat y(x.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      y[i][j] = s;
    }
  return y;
}

inline Mat norm(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
  Mat y = x;
  for (auto& row : y) {
    double mu = 0;
    for (double v : row) mu += v;
    mu /= row.size();
    double var = 0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return y;
}

}  // namespace ref

template <typename T>
ReferenceOutput reference_forward(const std::vector<float>& clip, const model::ModelParams<T>& p,
                                  const model::ModelConfig& cfg, model::View view) {
  using namespace ref;
  const int K = cfg.temporal_patch, P = cfg.patch, C = cfg.channels;
  const int N = cfg.tokens(), d = cfg.dim, heads = cfg.heads, dh = d / heads;

  // Patch rows straight from pixel coordinates.
  Mat patches;
  for (int s = 0; s < cfg.slots(); ++s)
    for (int r = 0; r < cfg.rows(); ++r)
      for (int c = 0; c < cfg.cols(); ++c) {
        std::vector<double> row;
        for (int k = 0; k < K; ++k)
          for (int y = 0; y < P; ++y)
            for (int x = 0; x < P; ++x)
              for (int ch = 0; ch < C; ++ch) {
                const int t = s * K + k, yy = r * P + y, xx = c * P + x;
                row.push_back(clip[((static_cast<std::size_t>(t) * cfg.height + yy) * cfg.width + xx) * C + ch] - 0.5);
              }
        patches.push_back(row);
      }
  Mat x = linear(patches, mat(p.patch_w), vec(p.patch_b));
  x.insert(x.begin(), vec(p.cls));
  const Mat pos = mat(p.pos);
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j < d; ++j) x[i][j] += pos[i][j];

  ReferenceOutput out;
  for (const auto& b : p.blocks) {
    const Mat h = norm(x, vec(b.ln1_g), vec(b.ln1_b));
    std::vector<double> bias = vec(b.b_q);
    bias.resize(2 * d, 0.0);
    for (double v : vec(b.b_v)) bias.push_back(v);
    const Mat qkv = linear(h, mat(b.w_qkv), bias);
    Mat concat(N + 1, std::vector<double>(d, 0.0));
    std::vector<double> cls_attn(N + 1, 0.0);
    for (int hd = 0; hd < heads; ++hd) {
      for (int i = 0; i <= N; ++i) {
        std::vector<double> s(N + 1);
        double mx = -1e300;
        for (int j = 0; j <= N; ++j) {
          double dot = 0;
          for (int e = 0; e < dh; ++e) dot += qkv[i][hd * dh + e] * qkv[j][d + hd * dh + e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& v : s) z += (v = std::exp(v - mx));
        for (auto& v : s) v /= z;
        if (i == 0)
          for (int j = 0; j <= N; ++j) cls_attn[j] += s[j] / heads;
        for (int e = 0; e < dh; ++e) {
          double acc = 0;
          for (int j = 0; j <= N; ++j) acc += s[j] * qkv[j][2 * d + hd * dh + e];
          concat[i][hd * dh + e] = acc;
        }
      }
    }
    double mass = 0;
    for (int j = 1; j <= N; ++j) mass += cls_attn[j];
    std::vector<double> map;
    for (int j = 1; j <= N; ++j) map.push_back(cls_attn[j] / mass);
    out.attention.push_back(map);

    const Mat proj = linear(concat, mat(b.w_o), vec(b.b_o));
    for (int i = 0; i <= N; ++i)
      for (int j = 0; j < d; ++j) x[i][j] += proj[i][j];
    Mat hidden = linear(norm(x, vec(b.ln2_g), vec(b.ln2_b)), mat(b.w_fc1), vec(b.b_fc1));
    for (auto& row : hidden)
      for (auto& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    const Mat mlp = linear(hidden, mat(b.w_fc2), vec(b.b_fc2));
    for (int i = 0; i <= N; ++i)
      for (int j = 0; j < d; ++j) x[i][j] += mlp[i][j];
  }
  const Mat feat = norm({x[0]}, vec(p.ln_f_g), vec(p.ln_f_b));
  out.feature = feat[0];
  const bool exo = view == model::View::Exo;
  out.logits = linear(feat, mat(exo ? p.head_exo_w : p.head_ego_w), vec(exo ? p.head_exo_b : p.head_ego_b))[0];
  return out;
}

}  // namespace cvar::testing
