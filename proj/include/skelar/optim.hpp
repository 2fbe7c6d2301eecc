#pragma once

#include <cmath>
#include <vector>

#include "skelar/common.hpp"
#include "skelar/tensor.hpp"

namespace skelar {

// p <- p - lr * grad(p), then grads are zeroed.
inline void sgd_step(std::vector<Tensor>& params, double lr) {
  for (Tensor& p : params) {
    if (!p.requires_grad()) {
      throw contract_error("sgd_step: parameter without gradient buffer");
    }
    auto& v = p.values();
    auto& g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p.zero_grad();
  }
}

// Adam with bias correction; used for the downstream HAR trainers.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
      if (!p.requires_grad()) throw contract_error("Adam: parameter without gradient buffer");
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& vals = params_[pi].values();
      auto& grad = params_[pi].grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < vals.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
        vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
      params_[pi].zero_grad();
    }
  }

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace skelar
