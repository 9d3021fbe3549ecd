#pragma once

// Losses for alternating training. The generator maximizes
//   E_data[ELBO(X)] - lambda * E_z[log(1 - D(G(z)))]
// (so it minimizes the negation), and the discriminator minimizes
//   -E_data[log D(X)] - E_z[log(1 - D(G(z)))].

#include <cmath>
#include <span>
#include <vector>

#include "arn/distributions.hpp"
#include "arn/errors.hpp"
#include "arn/networks.hpp"
#include "arn/rng.hpp"
#include "arn/tensor.hpp"

namespace arn {

struct LossBreakdown {
  double reconstruction = 0.0;  // E_q[log p(x1 | z)], single-sample estimate
  double kl_term = 0.0;         // KL(q(z | x1) || N(0, I))
  double ar_loglik = 0.0;       // sum_{i>=2} log p(x_i | h_{i-1})
  double adversarial = 0.0;     // mean generator adversarial term
  double total_generator = 0.0;
  double total_discriminator = 0.0;

  double elbo() const { return ar_loglik - kl_term + reconstruction; }
};

// Batch means of the three lower-bound terms, kept differentiable.
template <class T>
struct ElboTerms {
  Tensor<T> reconstruction;
  Tensor<T> kl;
  Tensor<T> ar_loglik;

  Tensor<T> total() const { return add(sub(ar_loglik, kl), reconstruction); }
};

// Single-sample reparameterized lower bound; `noise` is standard normal [B x d_z].
template <class T>
ElboTerms<T> elbo_terms(const ArnModel<T>& model, std::span<const TokenSequence> batch,
                        const Tensor<T>& noise) {
  detail::check_batch(model, batch);
  const auto x1 = detail::column(batch, 0);
  const auto q = encode_first_token(model, std::span<const TokenId>(x1));
  const auto z = reparam_sample(q, noise);
  const T inv = T(1) / static_cast<T>(batch.size());
  return {mean(first_token_log_prob(model, std::span<const TokenId>(x1), z)),
          scale(kl_gauss_std(q), inv), mean(autoregressive_log_prob(model, batch))};
}

template <class T>
LossBreakdown elbo(const ArnModel<T>& model, const TokenSequence& x, const Tensor<T>& noise) {
  const Tensor<T> n = noise.rank() == 1 ? reshape(noise, {1, noise.size()}) : noise;
  const auto terms = elbo_terms(model, std::span<const TokenSequence>(&x, 1), n);
  LossBreakdown out;
  out.reconstruction = static_cast<double>(terms.reconstruction.item());
  out.kl_term = static_cast<double>(terms.kl.item());
  out.ar_loglik = static_cast<double>(terms.ar_loglik.item());
  out.total_generator = -out.elbo();
  return out;
}

namespace detail {

// Column 0 holds log(1 - sigmoid(a)), column 1 holds log(sigmoid(a)).
template <class T>
Tensor<T> log_sigmoid_pair(const Tensor<T>& logits) {
  const std::size_t n = logits.size();
  const auto col = reshape(logits, {n, 1});
  return log_softmax(concat<T>({Tensor<T>::zeros({n, 1}), col}));
}

template <class T>
Tensor<T> mean_column(const Tensor<T>& pair, std::size_t c) {
  return mean(slice(pair, c, c + 1));
}

}  // namespace detail

// Mean of -log D(real) - log(1 - D(fake)). The fake rows are detached, so
// only discriminator parameters receive gradient.
template <class T>
Tensor<T> discriminator_loss(const ArnModel<T>& model, std::span<const TokenSequence> real,
                             const SoftSequence<T>& fake) {
  if (real.empty() || fake.batch() == 0) throw ConfigError("discriminator_loss: empty batch");
  detail::check_batch(model, real);
  const auto real_pair = detail::log_sigmoid_pair(discriminator_logits(model, one_hot<T>(real, model.dims.vocab)));
  const auto fake_pair = detail::log_sigmoid_pair(discriminator_logits(model, fake.detach()));
  return neg(add(detail::mean_column(real_pair, 1), detail::mean_column(fake_pair, 0)));
}

struct GeneratorLossConfig {
  double lambda_adv = 1.0;
  GumbelConfig gumbel{};
  // Minimize -log D(G(z)) instead of log(1 - D(G(z))).
  bool non_saturating = false;
};

// All randomness consumed by one generator-loss evaluation.
template <class T>
struct GeneratorNoise {
  Tensor<T> eps;                   // [B x d_z] reparameterization noise
  Tensor<T> z;                     // [B x d_z] prior draws for fakes
  std::vector<Tensor<T>> uniforms;  // Gumbel uniforms, one [B x V] per step

  static GeneratorNoise draw(const ModelDims& d, std::size_t batch, RandomStreams& streams) {
    return {normal_matrix(streams.noise, batch, d.latent), normal_matrix(streams.latent, batch, d.latent),
            draw_rollout_uniforms<T>(d, batch, streams.gumbel)};
  }

  static Tensor<T> normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    std::vector<T> v(rows * cols);
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return Tensor<T>({rows, cols}, std::move(v));
  }
};

template <class T>
struct GeneratorObjective {
  Tensor<T> total;
  LossBreakdown breakdown;
};

template <class T>
GeneratorObjective<T> generator_loss(const ArnModel<T>& model, std::span<const TokenSequence> real,
                                     const GeneratorLossConfig& cfg, const GeneratorNoise<T>& noise) {
  if (real.empty()) throw ConfigError("generator_loss: empty batch");
  if (cfg.lambda_adv < 0.0) throw ConfigError("generator_loss: lambda_adv must be non-negative");
  const auto terms = elbo_terms(model, real, noise.eps);
  const auto fake = generate_relaxed(model, noise.z, cfg.gumbel, noise.uniforms);
  const auto pair = detail::log_sigmoid_pair(discriminator_logits(model, fake));
  const auto adversarial =
      cfg.non_saturating ? neg(detail::mean_column(pair, 1)) : detail::mean_column(pair, 0);
  auto total = add(neg(terms.total()), scale(adversarial, static_cast<T>(cfg.lambda_adv)));

  LossBreakdown b;
  b.reconstruction = static_cast<double>(terms.reconstruction.item());
  b.kl_term = static_cast<double>(terms.kl.item());
  b.ar_loglik = static_cast<double>(terms.ar_loglik.item());
  b.adversarial = static_cast<double>(adversarial.item());
  b.total_generator = static_cast<double>(total.item());
  return {std::move(total), b};
}

template <class T>
GeneratorObjective<T> generator_loss(const ArnModel<T>& model, std::span<const TokenSequence> real,
                                     const GeneratorLossConfig& cfg, RandomStreams& streams) {
  if (real.empty()) throw ConfigError("generator_loss: empty batch");
  return generator_loss(model, real, cfg, GeneratorNoise<T>::draw(model.dims, real.size(), streams));
}

}  // namespace arn
