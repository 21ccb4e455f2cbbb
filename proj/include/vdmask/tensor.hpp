#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vdmask/common.hpp"

namespace vdm {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename S>
struct NodeT {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first use, same length as value
  bool requires_grad = false;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }

  std::vector<S>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), S(0));
    return grad;
  }
};

// Value-semantic handle onto a graph node. Copies share storage.
template <typename S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  static TensorT zeros(Shape shape) { return full(std::move(shape), S(0)); }

  static TensorT full(Shape shape, S v) {
    TensorT t;
    t.node_ = std::make_shared<NodeT<S>>();
    t.node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), v);
    t.node_->shape = std::move(shape);
    return t;
  }

  static TensorT from(Shape shape, std::vector<S> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    TensorT t;
    t.node_ = std::make_shared<NodeT<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }

  static TensorT scalar(S v) { return from({1}, {v}); }

  static TensorT param(Shape shape, std::vector<S> data) {
    TensorT t = from(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }

  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::vector<S>& grad() { return node_->grad_buffer(); }
  void clear_grad() { node_->grad.clear(); }

  S item() const {
    if (numel() != 1) {
      throw ContractError("item(): tensor has " + std::to_string(numel()) +
                          " elements, expected 1");
    }
    return node_->value[0];
  }

  // Deep copy; the clone is a detached leaf.
  TensorT clone() const {
    TensorT t;
    t.node_ = std::make_shared<NodeT<S>>();
    t.node_->shape = node_->shape;
    t.node_->value = node_->value;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  std::shared_ptr<NodeT<S>>& node() { return node_; }
  const std::shared_ptr<NodeT<S>>& node() const { return node_; }

  static TensorT wrap(std::shared_ptr<NodeT<S>> n) {
    TensorT t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<NodeT<S>> node_;
};

using Tensor = TensorT<float>;

}  // namespace vdm
