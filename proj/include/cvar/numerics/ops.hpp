#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cvar/numerics/tensor.hpp"

// Differentiable primitives. Every op records itself on the thread's active
// GradTape when an input requires a gradient. Matrices are 2-D row-major.
namespace cvar::num {

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
// Adds a length-cols vector to every row of a.
template <typename T> Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
// Normalizes over the last axis, then applies per-column gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
// min(x, hi) and max(x, lo); gradient is zero where the bound is active.
template <typename T> Tensor<T> clamp_max(const Tensor<T>& x, T hi);
template <typename T> Tensor<T> clamp_min(const Tensor<T>& x, T lo);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// x / sum(x)
template <typename T> Tensor<T> normalize(const Tensor<T>& x);

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t row0, std::size_t row1, std::size_t col0,
                std::size_t col1);
template <typename T> Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Mean over rows of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace cvar::num
