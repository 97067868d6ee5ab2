#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "clover/errors.hpp"

namespace clover {

struct TensorData {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values iff requires_grad
  bool requires_grad = false;
};

// Dense float64 array with an attached gradient slot. Copying a Tensor copies
// the handle; the storage is shared. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int64_t size() const { return static_cast<int64_t>(d_->values.size()); }
  bool is_scalar() const { return defined() && d_->values.size() == 1; }
  double item() const;

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  bool has_grad() const { return d_ && !d_->grad.empty(); }
  bool requires_grad() const { return d_->requires_grad; }
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  TensorData* raw() const { return d_.get(); }

 private:
  std::shared_ptr<TensorData> d_;
};

// Records one backward rule per forward op, in execution order. Execution
// order is topological by construction: an op's inputs always exist before
// the op runs. backward() replays the rules in reverse and accumulates
// gradients additively into every requires_grad tensor reachable from the
// given scalar loss. Callers zero parameter grads between passes.
class Tape {
 public:
  void record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }
  void backward(const Tensor& loss);
  size_t size() const { return rules_.size(); }
  void clear() { rules_.clear(); }

 private:
  std::vector<std::function<void()>> rules_;
};

// ---- primitive ops ----

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor matvec(Tape& tape, const Tensor& w, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double c);
Tensor sum(Tape& tape, const Tensor& x);
Tensor concat(Tape& tape, std::span<const Tensor> parts);

// Mean of the selected columns of a (rows x cols) table; one index selects a
// single column, several average them.
Tensor embedding_mean(Tape& tape, const Tensor& table, std::span<const int> columns);

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, int target);

// ca*a + cb*b elementwise, same shape
Tensor add_scaled(Tape& tape, const Tensor& a, double ca, const Tensor& b, double cb);

Tensor mean_of(Tape& tape, std::span<const Tensor> scalars);

// Copy of x that the tape treats as a constant.
Tensor detach(const Tensor& x);

struct DenseLayer {
  Tensor w;  // [out, in]
  Tensor b;  // [out]
};

Tensor affine(Tape& tape, const DenseLayer& layer, const Tensor& x);
Tensor affine_relu_stack(Tape& tape, const Tensor& x, std::span<const DenseLayer> layers,
                         bool final_linear);

// ---- plain-value helpers (no tape) ----

std::vector<double> softmax(std::span<const double> logits);
bool all_finite(std::span<const double> xs);

}  // namespace clover
