#pragma once

// Reverse-mode differentiation over an op tape. Each forward op appends one
// node holding its output value and a closure that routes the output
// gradient to the parents. backward() replays nodes in exact reverse
// order; tensors that never participated keep an all-zero gradient.

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mair/tensor.hpp"

namespace mair {

template <typename T>
class Tape;

// Cheap handle into a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& val() const { return tape->value(id); }
  const std::vector<int>& shape() const { return tape->value(id).shape; }
};

template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape<T>&, int)>;

  Var<T> leaf(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, nullptr});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<T> record(Tensor<T> value, BackFn back) {
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, std::move(back)});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Gradient of a node; all zeros until something flowed into it.
  const Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty() && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  bool grad_touched(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.data.empty(); }

  // Accumulation target for backward closures.
  Tensor<T>& grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
    const Tensor<T>& lv = value(loss.id);
    if (lv.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(lv.shape));
    grad_buf(loss.id).data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.back && !n.grad.data.empty()) n.back(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

}  // namespace mair
