#pragma once

#include <span>
#include <vector>

#include "clover/tensor.hpp"

namespace clover {

enum class StepDirection { descend, ascend };

// SGD or bias-corrected Adam over a fixed list of parameter tensors. Adam
// moment slots are allocated on first step and bound to that parameter list;
// passing a different list afterwards is a contract error.
class Optimizer {
 public:
  enum class Kind { sgd, adam };

  static Optimizer sgd(double lr) { return Optimizer(Kind::sgd, lr, 0.0, 0.0, 0.0); }
  static Optimizer adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    return Optimizer(Kind::adam, lr, beta1, beta2, eps);
  }

  void step(std::span<const Tensor> params, StepDirection dir);

  Kind kind() const { return kind_; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

 private:
  Optimizer(Kind kind, double lr, double b1, double b2, double eps)
      : kind_(kind), lr_(lr), beta1_(b1), beta2_(b2), eps_(eps) {}

  struct Slot {
    std::vector<double> m, v;
  };

  Kind kind_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
  std::vector<const TensorData*> bound_;
};

// Scales grads in place so their global L2 norm does not exceed max_norm.
// Returns the pre-clip norm. max_norm <= 0 disables clipping.
double clip_gradient_norm(std::span<const Tensor> params, double max_norm);

void zero_grads(std::span<const Tensor> params);

}  // namespace clover
