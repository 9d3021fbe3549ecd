#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "arn/errors.hpp"
#include "arn/rng.hpp"
#include "arn/tensor.hpp"

namespace arn {

// Diagonal Gaussian q(z | x1). Either a single vector [d_z] or a batch of
// rows [B x d_z]; mu and log_var always share a shape.
template <class T>
struct GaussianPosterior {
  Tensor<T> mu;
  Tensor<T> log_var;

  std::size_t latent_dim() const { return mu.cols(); }
};

// z = mu + exp(log_var / 2) * noise
template <class T>
Tensor<T> reparam_sample(const GaussianPosterior<T>& q, const Tensor<T>& noise) {
  if (q.mu.shape() != q.log_var.shape()) throw ShapeError("reparam_sample: mu/log_var differ");
  if (noise.shape() != q.mu.shape()) {
    throw ShapeError("reparam_sample: noise " + to_string(noise.shape()) + " vs latent " +
                     to_string(q.mu.shape()));
  }
  return add(q.mu, mul(exp(scale(q.log_var, T(0.5))), noise));
}

// KL(q || N(0, I)) summed over every entry (all batch rows):
//   1/2 * sum(mu^2 + exp(log_var) - 1 - log_var)
template <class T>
Tensor<T> kl_gauss_std(const GaussianPosterior<T>& q) {
  if (q.mu.shape() != q.log_var.shape()) throw ShapeError("kl_gauss_std: mu/log_var differ");
  for (T v : q.mu.data()) {
    if (!std::isfinite(v)) throw NumericsError("kl_gauss_std: non-finite mu");
  }
  for (T v : q.log_var.data()) {
    if (!std::isfinite(v)) throw NumericsError("kl_gauss_std: non-finite log_var");
  }
  const auto ones = Tensor<T>::full(q.mu.shape(), T(1));
  auto terms = sub(sub(add(mul(q.mu, q.mu), exp(q.log_var)), ones), q.log_var);
  return scale(sum(terms), T(0.5));
}

struct GumbelConfig {
  double temperature = 1.0;
  bool hard = false;  // straight-through one-hot forward values
};

inline constexpr double kGumbelClamp = 1e-12;

template <class T>
Tensor<T> draw_gumbel_uniforms(Rng& rng, Shape shape) {
  std::vector<T> u(numel(shape));
  for (auto& x : u) x = static_cast<T>(rng.uniform_open());
  return Tensor<T>(std::move(shape), std::move(u));
}

// softmax((logits + g) / tau), g = -log(-log(u)) per entry, over the last axis.
template <class T>
Tensor<T> gumbel_softmax(const Tensor<T>& logits, const GumbelConfig& cfg,
                         const Tensor<T>& uniform_noise) {
  if (!(cfg.temperature > 0.0)) {
    throw DomainError("gumbel_softmax: temperature must be positive, got " +
                      std::to_string(cfg.temperature));
  }
  if (uniform_noise.shape() != logits.shape()) {
    throw ShapeError("gumbel_softmax: noise " + to_string(uniform_noise.shape()) + " vs logits " +
                     to_string(logits.shape()));
  }
  std::vector<T> g(uniform_noise.size());
  const double lo = kGumbelClamp, hi = 1.0 - kGumbelClamp;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = std::clamp(static_cast<double>(uniform_noise[i]), lo, hi);
    g[i] = static_cast<T>(-std::log(-std::log(u)));
  }
  const Tensor<T> perturbed = add(logits, Tensor<T>(logits.shape(), std::move(g)));
  const Tensor<T> soft = softmax(scale(perturbed, static_cast<T>(1.0 / cfg.temperature)));
  if (!cfg.hard) return soft;

  const std::size_t k = soft.cols();
  std::vector<T> hard(soft.size(), T(0));
  for (std::size_t r = 0; r < soft.size() / k; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (soft[r * k + j] > soft[r * k + best]) best = j;
    }
    hard[r * k + best] = T(1);
  }
  return straight_through(soft, Tensor<T>(soft.shape(), std::move(hard)));
}

// Explicit finite distribution.
class Categorical {
 public:
  static constexpr double kTolerance = 1e-9;

  Categorical() = default;
  explicit Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ShapeError("Categorical: empty support");
    double total = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("Categorical: invalid probability");
      total += p;
    }
    if (std::abs(total - 1.0) > kTolerance) {
      throw DomainError("Categorical: probabilities sum to " + std::to_string(total));
    }
  }

  static Categorical normalized(std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("Categorical::normalized: no mass");
    for (auto& w : weights) w /= total;
    return Categorical(std::move(weights));
  }

  static Categorical uniform(std::size_t k) {
    return Categorical(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  // Uniform draw from the simplex (normalized unit exponentials).
  static Categorical random(std::size_t k, Rng& rng) {
    std::vector<double> w(k);
    for (auto& x : w) x = -std::log(rng.uniform_open());
    return normalized(std::move(w));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

namespace detail {
inline void require_same_support(const Categorical& p, const Categorical& q, const char* op) {
  if (p.size() != q.size()) {
    throw ShapeError(std::string(op) + ": support sizes differ (" + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()) + ")");
  }
}
}  // namespace detail

// sum p ln(p / q), 0 ln 0 = 0. Returns +infinity when p puts mass where q has none.
inline double kl_categorical(const Categorical& p, const Categorical& q) {
  detail::require_same_support(p, q, "kl_categorical");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

inline double js_categorical(const Categorical& p, const Categorical& q) {
  detail::require_same_support(p, q, "js_categorical");
  // Summed term by term so swapping p and q reproduces the same bits.
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    double a = p[i] > 0.0 ? p[i] * std::log(p[i] / m) : 0.0;
    double b = q[i] > 0.0 ? q[i] * std::log(q[i] / m) : 0.0;
    if (b < a) std::swap(a, b);
    js += 0.5 * (a + b);
  }
  return std::clamp(js, 0.0, std::numbers::ln2);
}

inline double entropy(const Categorical& p) {
  double h = 0.0;
  for (double x : p.probs()) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

inline double total_variation(const Categorical& p, const Categorical& q) {
  detail::require_same_support(p, q, "total_variation");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

}  // namespace arn
