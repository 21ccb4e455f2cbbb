#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vdmask/common.hpp"
#include "vdmask/tensor.hpp"

namespace vdm {

enum class OpKind {
  Matmul,
  Add,
  Mul,
  Affine,
  ConcatLastDim,
  SoftmaxRows,
  LayerNorm,
  Tanh,
  Sigmoid,
  Gelu,
  Exp,
  Log,
  Clamp,
  Sum,
  Mean,
};

inline constexpr std::array<OpKind, 15> kAllOpKinds = {
    OpKind::Matmul,      OpKind::Add,    OpKind::Mul,     OpKind::Affine,
    OpKind::ConcatLastDim, OpKind::SoftmaxRows, OpKind::LayerNorm,
    OpKind::Tanh,        OpKind::Sigmoid, OpKind::Gelu,   OpKind::Exp,
    OpKind::Log,         OpKind::Clamp,  OpKind::Sum,     OpKind::Mean,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Affine: return "affine";
    case OpKind::ConcatLastDim: return "concat_last_dim";
    case OpKind::SoftmaxRows: return "softmax_rows";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Gelu: return "gelu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Clamp: return "clamp";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
  }
  return "?";
}

struct OpAttrs {
  bool transpose_a = false;  // matmul
  bool transpose_b = false;  // matmul
  double scale = 1.0;        // affine: y = scale*x + shift
  double shift = 0.0;
  double lo = 0.0;           // clamp bounds
  double hi = 1.0;
  double eps = 1e-5;         // layer_norm
};

template <typename S>
struct TapeOpT {
  OpKind kind;
  OpAttrs attrs;
  std::vector<std::shared_ptr<NodeT<S>>> inputs;
  std::shared_ptr<NodeT<S>> output;
};

template <typename S>
void backward_op(const TapeOpT<S>& op);  // defined in ops.hpp

// Ordered record of executed ops. Reverse replay visits each recorded op
// exactly once and accumulates gradients additively into input nodes.
template <typename S>
class GradTapeT {
 public:
  void record(TapeOpT<S> op) { ops_.push_back(std::move(op)); }

  std::size_t size() const { return ops_.size(); }
  bool recording() const { return enabled_; }
  void set_recording(bool on) { enabled_ = on; }

  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss)=1 and replays the tape in reverse. The tape is
  // cleared afterwards regardless of success.
  void backward(TensorT<S> loss) {
    if (loss.numel() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(loss.shape()));
    }
    loss.grad()[0] += S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (!it->output->grad.empty()) backward_op(*it);
    }
    clear();
  }

 private:
  std::vector<TapeOpT<S>> ops_;
  bool enabled_ = true;
};

template <typename S>
GradTapeT<S>& active_tape() {
  thread_local GradTapeT<S> tape;
  return tape;
}

// Scoped switch that stops ops from being recorded (evaluation passes over
// parameters that still require grad).
template <typename S>
class NoGradGuardT {
 public:
  NoGradGuardT() : prev_(active_tape<S>().recording()) {
    active_tape<S>().set_recording(false);
  }
  ~NoGradGuardT() { active_tape<S>().set_recording(prev_); }
  NoGradGuardT(const NoGradGuardT&) = delete;
  NoGradGuardT& operator=(const NoGradGuardT&) = delete;

 private:
  bool prev_;
};

using GradTape = GradTapeT<float>;
using NoGradGuard = NoGradGuardT<float>;

}  // namespace vdm
