#pragma once

// Finite-outcome checks of the game-theoretic argument behind the combined
// objective: for fixed p_G the discriminator that minimizes
//   V(D) = sum p_d log p_G - sum p_d log D - sum p_G log(1 - D)
// is D* = p_d / (p_d + p_G), and the generator objective at D* reduces to
// -(JS + KL) plus a constant, minimized at p_G = p_d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "arn/distributions.hpp"
#include "arn/errors.hpp"
#include "arn/rng.hpp"

namespace arn {

struct ToyGame {
  Categorical p_data;
  Categorical p_gen;
  std::vector<double> d;  // per-outcome discriminator value in (0, 1)

  void validate() const {
    if (p_data.size() != p_gen.size() || d.size() != p_data.size()) {
      throw ShapeError("ToyGame: p_data, p_gen and D must share one support size");
    }
    for (double v : d) {
      if (!(v > 0.0 && v < 1.0)) throw DomainError("ToyGame: D values must lie in (0, 1)");
    }
  }
};

inline double game_value(const ToyGame& g) {
  g.validate();
  double v = 0.0;
  for (std::size_t i = 0; i < g.d.size(); ++i) {
    if (g.p_data[i] > 0.0) {
      if (g.p_gen[i] == 0.0) throw SupportError("game_value: p_data has mass where p_gen has none");
      v += g.p_data[i] * std::log(g.p_gen[i]);
      v -= g.p_data[i] * std::log(g.d[i]);
    }
    if (g.p_gen[i] > 0.0) v -= g.p_gen[i] * std::log1p(-g.d[i]);
  }
  return v;
}

// D*(x) = p_d(x) / (p_d(x) + p_G(x)); empty outcomes (0/0) are nullopt.
inline std::vector<std::optional<double>> optimal_discriminator(const Categorical& p_data,
                                                                const Categorical& p_gen) {
  if (p_data.size() != p_gen.size()) throw ShapeError("optimal_discriminator: support sizes differ");
  std::vector<std::optional<double>> out(p_data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = p_data[i] + p_gen[i];
    if (s > 0.0) out[i] = p_data[i] / s;
  }
  return out;
}

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

// lhs = E_pd[log p_G] - JS,  rhs = -JS - KL(p_d || p_G) + E_pd[log p_d].
// The two are computed through disjoint routes: lhs from raw sums, rhs from
// kl_categorical and entropy.
inline IdentityCheck verify_identity(const Categorical& p_data, const Categorical& p_gen) {
  if (p_data.size() != p_gen.size()) throw ShapeError("verify_identity: support sizes differ");
  double cross = 0.0;
  for (std::size_t i = 0; i < p_data.size(); ++i) {
    if (p_data[i] == 0.0) continue;
    if (p_gen[i] == 0.0) throw SupportError("verify_identity: p_data not absolutely continuous wrt p_gen");
    cross += p_data[i] * std::log(p_gen[i]);
  }
  const double js = js_categorical(p_data, p_gen);
  IdentityCheck r;
  r.lhs = cross - js;
  r.rhs = -js - kl_categorical(p_data, p_gen) - entropy(p_data);
  r.gap = std::abs(r.lhs - r.rhs);
  return r;
}

class ConvergenceError : public ArnError {
 public:
  ConvergenceError(const std::string& what, Categorical best, double best_tv)
      : ArnError(what), best(std::move(best)), best_tv(best_tv) {}
  Categorical best;
  double best_tv;
};

struct NashOptions {
  double tol = 1e-3;
  double step = 0.1;
  std::size_t max_iters = 100000;
};

struct NashResult {
  Categorical p_gen;
  double objective = 0.0;
  double tv = 0.0;
  std::size_t iterations = 0;
};

inline double kl_plus_js(const Categorical& p_data, const Categorical& p_gen) {
  return kl_categorical(p_data, p_gen) + js_categorical(p_data, p_gen);
}

// Gradient of KL(p || q) + JS(p || q) with respect to softmax logits of q.
//   d/dq_i KL = -p_i / q_i,   d/dq_i JS = 1/2 ln(q_i / m_i)
inline std::vector<double> kl_plus_js_logit_grad(const Categorical& p, const std::vector<double>& q) {
  const std::size_t k = q.size();
  std::vector<double> dq(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    dq[i] = -p[i] / q[i] + 0.5 * std::log(q[i] / m);
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < k; ++i) dot += q[i] * dq[i];
  std::vector<double> g(k);
  for (std::size_t i = 0; i < k; ++i) g[i] = q[i] * (dq[i] - dot);
  return g;
}

inline std::vector<double> softmax_of(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> q(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) z += (q[i] = std::exp(logits[i] - mx));
  for (auto& x : q) x /= z;
  return q;
}

// Gradient descent on softmax logits of p_G. Converged once TV(p_G, p_d) <=
// tol and the objective is <= tol^2 (the objective is quadratic in the
// deviation near the optimum).
inline NashResult solve_nash(const Categorical& p_data, const Categorical& init, const NashOptions& opts = {}) {
  if (p_data.size() != init.size()) throw ShapeError("solve_nash: support sizes differ");
  if (!(opts.tol > 0.0)) throw DomainError("solve_nash: tol must be positive");
  for (double p : p_data.probs()) {
    if (!(p > 0.0)) throw DomainError("solve_nash: p_data must be strictly positive");
  }
  std::vector<double> logits(init.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = std::log(std::max(init[i], 1e-300));
  }

  NashResult best{init, kl_plus_js(p_data, init), total_variation(p_data, init), 0};
  for (std::size_t it = 0; it <= opts.max_iters; ++it) {
    const auto q = softmax_of(logits);
    const Categorical cur = it == 0 ? init : Categorical::normalized(q);
    const double obj = kl_plus_js(p_data, cur);
    const double tv = total_variation(p_data, cur);
    if (tv < best.tv || (tv == best.tv && obj < best.objective)) best = {cur, obj, tv, it};
    if (tv <= opts.tol && obj <= opts.tol * opts.tol) return {cur, obj, tv, it};
    if (it == opts.max_iters) break;
    const auto g = kl_plus_js_logit_grad(p_data, q);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= opts.step * g[i];
  }
  throw ConvergenceError("solve_nash: iteration cap reached", best.p_gen, best.tv);
}

struct DivLabReport {
  double identity_max_gap = 0.0;
  double dstar_max_err = 0.0;
  double nash_tv = 0.0;
  std::size_t trials = 0;

  bool passed() const { return identity_max_gap <= 1e-10 && dstar_max_err <= 1e-4 && nash_tv <= 1e-3; }
};

// Per-coordinate exhaustive search of -p_d log D - p_G log(1 - D) over the
// grid {h, 2h, ..., 1 - h}. The game is separable in D, so this is the exact
// grid minimizer.
inline std::vector<double> grid_search_discriminator(const Categorical& p_data, const Categorical& p_gen,
                                                     double resolution = 1e-5) {
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
  std::vector<double> out(p_data.size(), 0.5);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t s = 1; s < steps; ++s) {
      const double d = static_cast<double>(s) * resolution;
      const double v = -p_data[i] * std::log(d) - p_gen[i] * std::log1p(-d);
      if (v < best_v) {
        best_v = v;
        out[i] = d;
      }
    }
  }
  return out;
}

// Runs the three suites on `trials` random games over K outcomes.
inline DivLabReport run_divergence_lab(std::size_t trials, std::size_t k, std::uint64_t seed) {
  if (trials == 0) throw ConfigError("divlab: trials must be >= 1");
  if (k < 2 || k > 16) throw ConfigError("divlab: K must be in [2, 16]");
  Rng rng = Rng::stream(seed, "divlab");
  DivLabReport rep;
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto pd = Categorical::random(k, rng);
    const auto pg = Categorical::random(k, rng);
    rep.identity_max_gap = std::max(rep.identity_max_gap, verify_identity(pd, pg).gap);

    const auto dstar = optimal_discriminator(pd, pg);
    const auto grid = grid_search_discriminator(pd, pg);
    for (std::size_t i = 0; i < k; ++i) {
      if (dstar[i]) rep.dstar_max_err = std::max(rep.dstar_max_err, std::abs(*dstar[i] - grid[i]));
    }

    const auto init = Categorical::random(k, rng);
    try {
      rep.nash_tv = std::max(rep.nash_tv, solve_nash(pd, init).tv);
    } catch (const ConvergenceError& e) {
      rep.nash_tv = std::max(rep.nash_tv, e.best_tv);
    }
  }
  return rep;
}

}  // namespace arn
