#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "arn/errors.hpp"
#include "arn/rng.hpp"
#include "arn/tensor.hpp"

namespace arn {

struct GradCheckOptions {
  double eps = 1e-5;
  // When nonzero, check at most this many coordinates per tensor, chosen
  // with `rng`. Zero checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences for every coordinate of `params`. Returns
//   max_i |analytic - numeric| / max(1, |analytic| + |numeric|).
// `loss` must rebuild its graph from the current parameter values on every
// call and must be deterministic.
inline double grad_check(const std::function<Tensor<double>()>& loss,
                         std::vector<Tensor<double>> params,
                         const GradCheckOptions& opts = {}) {
  if (!(opts.eps > 0.0)) throw DomainError("grad_check: eps must be positive");
  for (auto& p : params) p.zero_grad();
  const Tensor<double> root = loss();
  if (!std::isfinite(root.item())) throw NumericsError("grad_check: non-finite loss");
  backward(root);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), 0.0);
    }
  }

  Rng rng(opts.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    std::vector<std::size_t> coords;
    if (opts.max_coords_per_tensor == 0 || opts.max_coords_per_tensor >= values.size()) {
      coords.resize(values.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i) {
        coords.push_back(rng.below(values.size()));
      }
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.eps;
      const double up = loss().item();
      values[i] = saved - opts.eps;
      const double down = loss().item();
      values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericsError("grad_check: non-finite loss under perturbation");
      }
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

// Single-input form: f maps x to a scalar.
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         Tensor<double> x, double eps = 1e-5) {
  Tensor<double> leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return grad_check([&] { return f(leaf); }, {leaf}, GradCheckOptions{.eps = eps});
}

}  // namespace arn
