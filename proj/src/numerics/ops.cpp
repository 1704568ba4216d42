#include "cvar/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cvar/common/error.hpp"

namespace cvar::num {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  auto* tape = GradTape<T>::active();
  bool needs_grad = false;
  if (tape) {
    for (const auto& p : parents) needs_grad = needs_grad || p->requires_grad;
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<T>::from_node(std::move(node));
}

void require_2d(const Shape& s, const char* op) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

// Elementwise unary op with derivative expressed through (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_2d(a.shape(), "matmul");
  require_2d(b.shape(), "matmul");
  const auto m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMatMap<T> dc(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MatMap<T>(pa.grad_buffer().data(), m, k).noalias() +=
          dc * ConstMatMap<T>(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MatMap<T>(pb.grad_buffer().data(), k, n).noalias() +=
          ConstMatMap<T>(pa.value.data(), m, k).transpose() * dc;
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_2d(a.shape(), "transpose");
  const auto m = a.size(0), n = a.size(1);
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), n, m) = ConstMatMap<T>(a.data().data(), m, n).transpose();
  return make_result<T>({n, m}, std::move(out), {a.node()}, [m, n](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    MatMap<T>(p.grad_buffer().data(), m, n) += ConstMatMap<T>(self.grad.data(), n, m).transpose();
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer();
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary(a, [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  require_2d(a.shape(), "add_bias");
  const auto m = a.size(0), n = a.size(1);
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                     shape_str(a.shape()));
  }
  std::vector<T> out(a.numel());
  auto av = a.data(), bv = bias.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] + bv[c];
  return make_result<T>(a.shape(), std::move(out), {a.node(), bias.node()}, [m, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return make_result<T>(s, std::move(out), {x.node()}, [outer, inner, len](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < len; ++k) {
          dot += self.grad[base + k * inner] * self.value[base + k * inner];
        }
        for (std::size_t k = 0; k < len; ++k) {
          const auto i = base + k * inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const auto& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  const std::size_t n = s.back();
  const std::size_t rows = x.numel() / n;
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  }
  std::vector<T> out(x.numel()), xhat(x.numel()), rstd(rows);
  auto xv = x.data(), gv = gain.data(), bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(n);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const auto i = r * n + c;
      xhat[i] = (row[c] - mu) * rstd[r];
      out[i] = xhat[i] * gv[c] + bv[c];
    }
  }
  return make_result<T>(
      s, std::move(out), {x.node(), gain.node(), bias.node()},
      [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c] * xhat[r * n + c];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += dy[r * n + c];
        }
        if (px.requires_grad) {
          auto& g = px.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < n; ++c) {
              const auto i = r * n + c;
              const T d = dy[i] * pg.value[c];
              mean_d += d;
              mean_dx += d * xhat[i];
            }
            mean_d /= T(n);
            mean_dx /= T(n);
            for (std::size_t c = 0; c < n; ++c) {
              const auto i = r * n + c;
              const T d = dy[i] * pg.value[c];
              g[i] += rstd[r] * (d - mean_d - xhat[i] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-T(0.5) * v * v);
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (auto v : x.data()) {
    if (!(v > T(0))) throw std::domain_error("log: input must be strictly positive");
  }
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (auto v : x.data()) {
    if (!(v > T(0))) throw std::domain_error("sqrt: input must be strictly positive");
  }
  return unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> clamp_max(const Tensor<T>& x, T hi) {
  return unary(x, [hi](T v) { return std::min(v, hi); }, [hi](T v, T) { return v < hi ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
  return unary(x, [lo](T v) { return std::max(v, lo); }, [lo](T v, T) { return v > lo ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (auto v : x.data()) total += v;
  return make_result<T>({1}, {total}, {x.node()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (auto& g : p.grad_buffer()) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& x) {
  T total = 0;
  for (auto v : x.data()) total += v;
  if (!(total != T(0)) || !std::isfinite(total)) {
    throw std::domain_error("normalize: sum must be finite and nonzero");
  }
  std::vector<T> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / total;
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [total](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    T dot = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (self.grad[i] - dot) / total;
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> rows) {
  require_2d(table.shape(), "gather_rows");
  const auto n = table.size(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<T> out(idx.size() * n);
  auto tv = table.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= table.size(0)) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
                       shape_str(table.shape()));
    }
    std::copy_n(tv.begin() + idx[r] * n, n, out.begin() + r * n);
  }
  Shape shape{idx.size(), n};
  return make_result<T>(shape, std::move(out), {table.node()}, [n, idx = std::move(idx)](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) g[idx[r] * n + c] += self.grad[r * n + c];
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t row0, std::size_t row1, std::size_t col0,
                std::size_t col1) {
  require_2d(x.shape(), "slice");
  const auto n = x.size(1);
  if (row0 >= row1 || col0 >= col1 || row1 > x.size(0) || col1 > n) {
    throw ShapeError("slice: block [" + std::to_string(row0) + "," + std::to_string(row1) + ")x[" +
                     std::to_string(col0) + "," + std::to_string(col1) + ") invalid for " +
                     shape_str(x.shape()));
  }
  const auto m = row1 - row0, w = col1 - col0;
  std::vector<T> out(m * w);
  auto xv = x.data();
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(xv.begin() + (row0 + r) * n + col0, w, out.begin() + r * w);
  return make_result<T>({m, w}, std::move(out), {x.node()}, [=](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) g[(row0 + r) * n + col0 + c] += self.grad[r * w + c];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto n = parts[0].size(1);
  std::size_t m = 0;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    require_2d(p.shape(), "concat_rows");
    if (p.size(1) != n) throw ShapeError("concat_rows: column count mismatch");
    m += p.size(0);
    parents.push_back(p.node());
  }
  std::vector<T> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>({m, n}, std::move(out), std::move(parents), [](Node<T>& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const auto len = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto m = parts[0].size(0);
  std::size_t n = 0;
  std::vector<NodePtr<T>> parents;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_2d(p.shape(), "concat_cols");
    if (p.size(0) != m) throw ShapeError("concat_cols: row count mismatch");
    n += p.size(1);
    widths.push_back(p.size(1));
    parents.push_back(p.node());
  }
  std::vector<T> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto w = p.size(1);
    auto pv = p.data();
    for (std::size_t r = 0; r < m; ++r) std::copy_n(pv.begin() + r * w, w, out.begin() + r * n + col);
    col += w;
  }
  return make_result<T>({m, n}, std::move(out), std::move(parents),
                        [m, n, widths = std::move(widths)](Node<T>& self) {
                          std::size_t col0 = 0;
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            auto& p = *self.parents[k];
                            const auto w = widths[k];
                            if (p.requires_grad) {
                              auto& g = p.grad_buffer();
                              for (std::size_t r = 0; r < m; ++r)
                                for (std::size_t c = 0; c < w; ++c)
                                  g[r * w + c] += self.grad[r * n + col0 + c];
                            }
                            col0 += w;
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_2d(logits.shape(), "cross_entropy");
  const auto b = logits.size(0), c = logits.size(1);
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  std::vector<int> lab(labels.begin(), labels.end());
  for (int l : lab) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                              std::to_string(c) + ")");
    }
  }
  auto lv = logits.data();
  std::vector<T> probs(b * c);
  T total = 0;
  for (std::size_t r = 0; r < b; ++r) {
    const T* row = lv.data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t k = 0; k < c; ++k) probs[r * c + k] = std::exp(row[k] - lse);
    total += lse - row[lab[r]];
  }
  return make_result<T>({1}, {total / T(b)}, {logits.node()},
                        [b, c, lab = std::move(lab), probs = std::move(probs)](Node<T>& self) {
                          auto& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          auto& g = p.grad_buffer();
                          const T s = self.grad[0] / T(b);
                          for (std::size_t r = 0; r < b; ++r) {
                            for (std::size_t k = 0; k < c; ++k) {
                              const T onehot = static_cast<std::size_t>(lab[r]) == k ? T(1) : T(0);
                              g[r * c + k] += s * (probs[r * c + k] - onehot);
                            }
                          }
                        });
}

#define CVAR_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                           \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
  template Tensor<T> gelu(const Tensor<T>&);                                                    \
  template Tensor<T> log(const Tensor<T>&);                                                     \
  template Tensor<T> sqrt(const Tensor<T>&);                                                    \
  template Tensor<T> clamp_max(const Tensor<T>&, T);                                            \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> normalize(const Tensor<T>&);                                               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

CVAR_INSTANTIATE_OPS(float)
CVAR_INSTANTIATE_OPS(double)

}  // namespace cvar::num
