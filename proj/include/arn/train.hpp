#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arn/errors.hpp"
#include "arn/networks.hpp"
#include "arn/objectives.hpp"
#include "arn/optim.hpp"
#include "arn/rng.hpp"

namespace arn {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t steps = 0;
  AdamConfig generator_adam{};
  AdamConfig discriminator_adam{};
  double lambda_adv = 1.0;
  std::size_t d_steps = 1;  // discriminator updates per step
  std::size_t g_steps = 1;  // generator updates per step
  double tau_start = 1.0;
  double tau_end = 0.2;
  bool hard = false;
  bool non_saturating = false;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (lambda_adv < 0.0) throw ConfigError("lambda_adv must be >= 0");
    if (!(tau_start > 0.0) || !(tau_end > 0.0)) throw ConfigError("temperatures must be positive");
    if (d_steps == 0 && g_steps == 0) throw ConfigError("d_steps and g_steps cannot both be 0");
    if (!(generator_adam.lr > 0.0) || !(discriminator_adam.lr > 0.0)) {
      throw ConfigError("learning rates must be positive");
    }
  }
};

// Exponential anneal from tau_start at step 0 to tau_end at the last step.
inline double temperature_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.steps <= 1) return cfg.tau_start;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, frac);
}

struct TraceRecord {
  std::size_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double ar_loglik = 0.0;
  double adv = 0.0;
  double tau = 0.0;
};

// Epoch-wise reshuffled minibatches; a short tail wraps into the next epoch.
class BatchSampler {
 public:
  BatchSampler(std::span<const TokenSequence> corpus, Rng& rng) : corpus_(corpus), rng_(&rng) {
    if (corpus.empty()) throw EmptyInputError("training corpus is empty");
    order_.resize(corpus.size());
    reshuffle();
  }

  std::vector<TokenSequence> next(std::size_t n) {
    std::vector<TokenSequence> batch;
    batch.reserve(n);
    while (batch.size() < n) {
      if (pos_ == order_.size()) reshuffle();
      batch.push_back(corpus_[order_[pos_++]]);
    }
    return batch;
  }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_->below(i)]);
    pos_ = 0;
  }

  std::span<const TokenSequence> corpus_;
  Rng* rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

class TrainingAborted : public NumericsError {
 public:
  TrainingAborted(const std::string& what, std::vector<TraceRecord> trace)
      : NumericsError(what), trace(std::move(trace)) {}
  std::vector<TraceRecord> trace;
};

template <class T>
using CheckpointSink = std::function<void(const ArnModel<T>&, std::size_t step)>;

namespace detail {

template <class T>
std::vector<Tensor<T>> tensors_of(const std::vector<NamedTensor<T>>& named) {
  std::vector<Tensor<T>> out;
  for (const auto& p : named) out.push_back(p.tensor);
  return out;
}

template <class T>
bool grads_finite(const std::vector<Tensor<T>>& params) {
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

}  // namespace detail

// Alternating updates: each step draws one real minibatch, runs d_steps
// discriminator updates against freshly relaxed fakes, then g_steps
// generator updates. A non-finite loss or gradient rejects the update and
// halves both learning rates; a second occurrence aborts with the last good
// parameters handed to `sink` before TrainingAborted is thrown. `sink` also
// receives periodic snapshots when checkpoint_every is set.
template <class T>
std::vector<TraceRecord> train(ArnModel<T>& model, std::span<const TokenSequence> corpus,
                               const TrainConfig& cfg, const CheckpointSink<T>& sink = {}) {
  cfg.validate();
  std::vector<TraceRecord> trace;
  if (cfg.steps == 0) return trace;
  for (const auto& x : corpus) {
    if (x.vocab_size() != model.dims.vocab || x.length() != model.dims.seq_len) {
      throw ConfigError("corpus sequence does not match model dims (T=" +
                        std::to_string(model.dims.seq_len) + ", V=" + std::to_string(model.dims.vocab) + ")");
    }
  }

  RandomStreams streams(cfg.seed);
  BatchSampler sampler(corpus, streams.shuffle);
  const auto gen_params = detail::tensors_of(model.generator_parameters());
  const auto disc_params = detail::tensors_of(model.discriminator_parameters());
  Adam<T> gen_opt(gen_params, cfg.generator_adam);
  Adam<T> disc_opt(disc_params, cfg.discriminator_adam);
  bool halved = false;

  auto reject = [&](const std::string& why, std::size_t step) {
    model.zero_grad();
    if (!halved) {
      halved = true;
      gen_opt.config().lr *= 0.5;
      disc_opt.config().lr *= 0.5;
      return;
    }
    if (sink) sink(model, step);
    throw TrainingAborted("training aborted at step " + std::to_string(step) + ": " + why, trace);
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double tau = temperature_at(cfg, step);
    const GumbelConfig gumbel{tau, cfg.hard};
    const auto real = sampler.next(cfg.batch_size);
    TraceRecord rec;
    rec.step = step;
    rec.tau = tau;
    bool step_ok = true;

    for (std::size_t k = 0; k < cfg.d_steps && step_ok; ++k) {
      std::string failure;
      try {
        const ArnModel<T> frozen = model.frozen();
        const auto z = GeneratorNoise<T>::normal_matrix(streams.latent, real.size(), model.dims.latent);
        const auto fake = generate_relaxed(frozen, z, gumbel, streams.gumbel);
        const auto loss = discriminator_loss(model, std::span<const TokenSequence>(real), fake);
        rec.d_loss = static_cast<double>(loss.item());
        if (!std::isfinite(rec.d_loss)) {
          failure = "non-finite discriminator loss";
        } else {
          backward(loss);
          if (!detail::grads_finite(disc_params)) failure = "non-finite discriminator gradient";
        }
      } catch (const NumericsError& e) {
        failure = e.what();
      }
      if (!failure.empty()) {
        reject(failure, step);
        step_ok = false;
        break;
      }
      disc_opt.step();
      model.zero_grad();
    }

    const GeneratorLossConfig gcfg{cfg.lambda_adv, gumbel, cfg.non_saturating};
    for (std::size_t k = 0; k < cfg.g_steps && step_ok; ++k) {
      std::string failure;
      try {
        const auto noise = GeneratorNoise<T>::draw(model.dims, real.size(), streams);
        const auto obj = generator_loss(model, std::span<const TokenSequence>(real), gcfg, noise);
        rec.g_loss = obj.breakdown.total_generator;
        rec.recon = obj.breakdown.reconstruction;
        rec.kl = obj.breakdown.kl_term;
        rec.ar_loglik = obj.breakdown.ar_loglik;
        rec.adv = obj.breakdown.adversarial;
        if (!std::isfinite(rec.g_loss)) {
          failure = "non-finite generator loss";
        } else {
          backward(obj.total);
          if (!detail::grads_finite(gen_params)) failure = "non-finite generator gradient";
        }
      } catch (const NumericsError& e) {
        failure = e.what();
      }
      if (!failure.empty()) {
        reject(failure, step);
        step_ok = false;
        break;
      }
      gen_opt.step();
      model.zero_grad();
    }

    trace.push_back(rec);
    if (sink && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) sink(model, step + 1);
  }
  return trace;
}

}  // namespace arn
