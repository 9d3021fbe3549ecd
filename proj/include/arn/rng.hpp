#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>

#include "arn/errors.hpp"

namespace arn {

// Thin wrapper over mt19937_64. Uniform and normal draws are produced here
// rather than through <random> distributions so the bit stream is identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream derived from a base seed and a stream name.
  static Rng stream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : name) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return Rng(splitmix(seed ^ splitmix(h)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // (0, 1)
  double uniform_open() {
    for (;;) {
      double u = uniform();
      if (u > 0.0) return u;
    }
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw ConfigError("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
      std::uint64_t x = engine_();
      if (x < limit) return static_cast<std::size_t>(x % n);
    }
  }

  // Inverse-CDF draw; probabilities need not be exactly normalized.
  std::size_t categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    if (probs.empty() || !(total > 0.0)) throw ConfigError("Rng::categorical: no mass");
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (probs[i] > 0.0) return i;
    }
    return probs.size() - 1;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named sub-streams for one run. Each consumer draws from its own stream so
// enabling or disabling one component never shifts another's randomness.
struct RandomStreams {
  explicit RandomStreams(std::uint64_t seed)
      : init(Rng::stream(seed, "init")),
        noise(Rng::stream(seed, "noise")),
        latent(Rng::stream(seed, "latent")),
        gumbel(Rng::stream(seed, "gumbel")),
        shuffle(Rng::stream(seed, "data-shuffle")) {}

  Rng init;     // parameter initialization
  Rng noise;    // reparameterization noise for the ELBO
  Rng latent;   // prior draws z ~ N(0, I) for fake sequences
  Rng gumbel;   // Gumbel-Softmax uniforms
  Rng shuffle;  // minibatch order
};

}  // namespace arn
