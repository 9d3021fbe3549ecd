#pragma once

#include <cmath>
#include <vector>

#include "arn/errors.hpp"
#include "arn/tensor.hpp"

namespace arn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. A parameter without a
// populated gradient is treated as having a zero gradient.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  // Throws NumericsError, leaving parameters and moments untouched, if any
  // gradient is non-finite.
  void step() {
    for (const auto& p : params_) {
      if (!p.has_grad()) continue;
      for (T g : p.grad()) {
        if (!std::isfinite(g)) throw NumericsError("Adam: non-finite gradient, step rejected");
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto values = params_[k].mutable_data();
      const bool has = params_[k].has_grad();
      auto grad = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = has ? static_cast<double>(grad[i]) : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        values[i] = static_cast<T>(static_cast<double>(values[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  AdamConfig& config() { return cfg_; }
  const AdamConfig& config() const { return cfg_; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace arn
