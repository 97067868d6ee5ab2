#include "clover/optim.hpp"

#include <cmath>

namespace clover {

void Optimizer::step(std::span<const Tensor> params, StepDirection dir) {
  const double sign = dir == StepDirection::descend ? -1.0 : 1.0;

  if (kind_ == Kind::adam) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      bound_.reserve(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].values().size(), 0.0);
        slots_[i].v.assign(params[i].values().size(), 0.0);
        bound_.push_back(params[i].raw());
      }
    }
    if (params.size() != slots_.size()) throw ContractError("optimizer bound to a different parameter list");
    for (size_t i = 0; i < params.size(); ++i)
      if (params[i].raw() != bound_[i]) throw ContractError("optimizer bound to a different parameter list");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      const Tensor& p = params[i];
      if (!p.has_grad()) throw ContractError("optimizer step with missing gradient");
      Slot& s = slots_[i];
      const size_t n = p.values().size();
      for (size_t j = 0; j < n; ++j) {
        const double g = p.grad()[j];
        s.m[j] = beta1_ * s.m[j] + (1.0 - beta1_) * g;
        s.v[j] = beta2_ * s.v[j] + (1.0 - beta2_) * g * g;
        const double mhat = s.m[j] / bc1;
        const double vhat = s.v[j] / bc2;
        p.raw()->values[j] += sign * lr_ * (mhat / (std::sqrt(vhat) + eps_));
      }
    }
    return;
  }

  ++t_;
  for (const Tensor& p : params) {
    if (!p.has_grad()) throw ContractError("optimizer step with missing gradient");
    const size_t n = p.values().size();
    for (size_t j = 0; j < n; ++j) p.raw()->values[j] += sign * lr_ * p.grad()[j];
  }
}

double clip_gradient_norm(std::span<const Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) throw ContractError("clip with missing gradient");
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const Tensor& p : params)
      for (double& g : p.raw()->grad) g *= f;
  }
  return norm;
}

void zero_grads(std::span<const Tensor> params) {
  for (const Tensor& p : params) p.zero_grad();
}

}  // namespace clover
