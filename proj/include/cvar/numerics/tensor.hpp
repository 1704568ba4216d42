#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cvar::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Dense row-major array. Shares its node on copy; values are never mutated
// after creation except for parameter leaves updated by an optimizer.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value);
  static Tensor from_node(std::shared_ptr<Node<T>> node);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T at(std::size_t i) const { return node_->value.at(i); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // New leaf holding a copy of the values, cut from any recorded history.
  Tensor detach(bool requires_grad = false) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->value.begin(), node_->value.end());
    return Tensor<U>(node_->shape, std::move(out), node_->requires_grad);
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Ordered record of the ops executed while it is active on this thread.
// Ops only record when at least one input requires a gradient.
template <typename T>
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(std::shared_ptr<Node<T>> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1, replays the record in reverse and clears it.
  // Leaf gradients accumulate into their existing grad buffers.
  void backward(const Tensor<T>& loss);
  void clear();

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
  GradTape* previous_ = nullptr;
};

// Runs backward on the tape active on this thread.
template <typename T>
void backward(const Tensor<T>& loss);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace cvar::num
