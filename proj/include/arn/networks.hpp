#pragma once

// The generator side of the model: an LSTM autoregressive chain whose first
// token comes from a small VAE (encoder x1 -> q(z|x1), decoder z -> p(x1|z)),
// and a sequence discriminator that reads relaxed one-hot rows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arn/distributions.hpp"
#include "arn/errors.hpp"
#include "arn/rng.hpp"
#include "arn/tensor.hpp"

namespace arn {

using TokenId = std::size_t;

// Fixed-length id sequence bound to a vocabulary size.
class TokenSequence {
 public:
  TokenSequence() = default;
  TokenSequence(std::vector<TokenId> ids, std::size_t vocab_size)
      : ids_(std::move(ids)), vocab_size_(vocab_size) {
    for (TokenId id : ids_) {
      if (id >= vocab_size_) {
        throw VocabError("TokenSequence: id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(vocab_size_));
      }
    }
  }

  const std::vector<TokenId>& ids() const { return ids_; }
  std::size_t length() const { return ids_.size(); }
  std::size_t vocab_size() const { return vocab_size_; }
  TokenId operator[](std::size_t i) const { return ids_[i]; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;

 private:
  std::vector<TokenId> ids_;
  std::size_t vocab_size_ = 0;
};

struct ModelDims {
  std::size_t vocab = 8;
  std::size_t seq_len = 8;
  std::size_t embed = 16;
  std::size_t hidden = 32;
  std::size_t latent = 8;
  std::size_t disc_hidden = 32;

  static ModelDims desk() { return {}; }
  static ModelDims paper() { return {10000, 20, 500, 500, 350, 500}; }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline constexpr double kInitRange = 0.08;

template <class T>
struct Dense {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

// Gate layout along the 4H axis: input, forget, candidate, output.
template <class T>
struct LstmCell {
  Tensor<T> weight;  // [(in + H) x 4H]
  Tensor<T> bias;    // [4H]

  std::size_t hidden() const { return bias.size() / 4; }
  std::size_t input() const { return weight.shape()[0] - hidden(); }
};

template <class T>
struct RnnState {
  Tensor<T> h;  // [B x H]
  Tensor<T> c;  // [B x H]

  static RnnState zeros(std::size_t batch, std::size_t hidden) {
    return {Tensor<T>::zeros({batch, hidden}), Tensor<T>::zeros({batch, hidden})};
  }
};

template <class T>
RnnState<T> lstm_cell_step(const LstmCell<T>& cell, const Tensor<T>& input, const RnnState<T>& state) {
  const std::size_t hid = cell.hidden();
  if (input.rank() != 2 || input.cols() != cell.input()) {
    throw ShapeError("lstm_step: input " + to_string(input.shape()) + " but cell expects width " +
                     std::to_string(cell.input()));
  }
  const Shape state_shape{input.rows(), hid};
  if (state.h.shape() != state_shape || state.c.shape() != state_shape) {
    throw ShapeError("lstm_step: state " + to_string(state.h.shape()) + " vs expected " +
                     to_string(state_shape));
  }
  const auto gates = add_bias(matmul(concat<T>({input, state.h}), cell.weight), cell.bias);
  const auto i = sigmoid(slice(gates, 0, hid));
  const auto f = sigmoid(slice(gates, hid, 2 * hid));
  const auto g = tanh(slice(gates, 2 * hid, 3 * hid));
  const auto o = sigmoid(slice(gates, 3 * hid, 4 * hid));
  auto c = add(mul(f, state.c), mul(i, g));
  auto h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

// Relaxed one-hot rows, one [B x V] tensor per time step.
template <class T>
struct SoftSequence {
  std::vector<Tensor<T>> rows;

  std::size_t length() const { return rows.size(); }
  std::size_t batch() const { return rows.empty() ? 0 : rows[0].rows(); }

  SoftSequence detach() const {
    SoftSequence out;
    for (const auto& r : rows) out.rows.push_back(r.detach());
    return out;
  }
};

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
class ArnModel {
 public:
  ModelDims dims;

  // theta: autoregressive generator and first-token decoder
  Tensor<T> embedding;  // [V x E]
  LstmCell<T> generator;
  Dense<T> output;   // H -> V
  Dense<T> decoder;  // d_z -> V
  // phi: first-token encoder
  Tensor<T> encoder_embedding;  // [V x E]
  Dense<T> encoder;             // E -> 2 d_z (mu | log_var)
  // discriminator
  Tensor<T> disc_embedding;  // [V x E]
  LstmCell<T> disc_cell;
  Dense<T> disc_head;  // H_d -> 1

  static ArnModel zeros(const ModelDims& d) {
    ArnModel m;
    m.dims = d;
    auto z = [](Shape s) { return Tensor<T>::zeros(std::move(s), true); };
    m.embedding = z({d.vocab, d.embed});
    m.generator = {z({d.embed + d.hidden, 4 * d.hidden}), z({4 * d.hidden})};
    m.output = {z({d.hidden, d.vocab}), z({d.vocab})};
    m.decoder = {z({d.latent, d.vocab}), z({d.vocab})};
    m.encoder_embedding = z({d.vocab, d.embed});
    m.encoder = {z({d.embed, 2 * d.latent}), z({2 * d.latent})};
    m.disc_embedding = z({d.vocab, d.embed});
    m.disc_cell = {z({d.embed + d.disc_hidden, 4 * d.disc_hidden}), z({4 * d.disc_hidden})};
    m.disc_head = {z({d.disc_hidden, 1}), z({1})};
    return m;
  }

  // Every parameter uniform in [-range, range], drawn in parameters() order.
  static ArnModel random(const ModelDims& d, Rng& rng, double range = kInitRange) {
    ArnModel m = zeros(d);
    for (auto& p : m.parameters()) {
      for (auto& v : p.tensor.mutable_data()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * range);
    }
    return m;
  }

  // Generator-side parameters: theta followed by phi.
  std::vector<NamedTensor<T>> generator_parameters() const {
    return {{"generator/embedding", embedding},
            {"generator/lstm/weight", generator.weight},
            {"generator/lstm/bias", generator.bias},
            {"generator/output/weight", output.weight},
            {"generator/output/bias", output.bias},
            {"decoder/weight", decoder.weight},
            {"decoder/bias", decoder.bias},
            {"encoder/embedding", encoder_embedding},
            {"encoder/weight", encoder.weight},
            {"encoder/bias", encoder.bias}};
  }

  std::vector<NamedTensor<T>> discriminator_parameters() const {
    return {{"discriminator/embedding", disc_embedding},
            {"discriminator/lstm/weight", disc_cell.weight},
            {"discriminator/lstm/bias", disc_cell.bias},
            {"discriminator/head/weight", disc_head.weight},
            {"discriminator/head/bias", disc_head.bias}};
  }

  std::vector<NamedTensor<T>> parameters() const {
    auto all = generator_parameters();
    for (auto& p : discriminator_parameters()) all.push_back(std::move(p));
    return all;
  }

  // Deep copy with fresh parameter storage.
  ArnModel clone() const {
    ArnModel m = *this;
    m.rebind([](const Tensor<T>& t) { return t.clone(); });
    return m;
  }

  // Deep copy whose tensors record no history; used for sampling.
  ArnModel frozen() const {
    ArnModel m = *this;
    m.rebind([](const Tensor<T>& t) { return t.detach(); });
    return m;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

  bool all_finite() const {
    for (const auto& p : parameters()) {
      for (T v : p.tensor.data()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

 private:
  template <class F>
  void rebind(F f) {
    for (Tensor<T>* t : {&embedding, &generator.weight, &generator.bias, &output.weight, &output.bias,
                         &decoder.weight, &decoder.bias, &encoder_embedding, &encoder.weight,
                         &encoder.bias, &disc_embedding, &disc_cell.weight, &disc_cell.bias,
                         &disc_head.weight, &disc_head.bias}) {
      *t = f(*t);
    }
  }
};

namespace detail {

inline void check_ids(std::span<const TokenId> ids, std::size_t vocab) {
  for (TokenId id : ids) {
    if (id >= vocab) {
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
}

template <class T>
void check_batch(const ArnModel<T>& model, std::span<const TokenSequence> batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  for (const auto& x : batch) {
    if (x.vocab_size() != model.dims.vocab) {
      throw VocabError("sequence bound to vocabulary " + std::to_string(x.vocab_size()) +
                       ", model has " + std::to_string(model.dims.vocab));
    }
    if (x.length() != batch[0].length() || x.length() == 0) {
      throw ShapeError("batch sequences must share one nonzero length");
    }
  }
}

inline std::vector<TokenId> column(std::span<const TokenSequence> batch, std::size_t t) {
  std::vector<TokenId> ids(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) ids[b] = batch[b][t];
  return ids;
}

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace detail

// q(z | x1, phi) for a batch of first tokens; rows of mu and log_var are [B x d_z].
template <class T>
GaussianPosterior<T> encode_first_token(const ArnModel<T>& model, std::span<const TokenId> x1) {
  detail::check_ids(x1, model.dims.vocab);
  const auto stats = model.encoder(gather_rows(model.encoder_embedding, x1));
  const std::size_t dz = model.dims.latent;
  return {slice(stats, 0, dz), slice(stats, dz, 2 * dz)};
}

template <class T>
GaussianPosterior<T> encode_first_token(const ArnModel<T>& model, TokenId x1) {
  const TokenId ids[] = {x1};
  return encode_first_token(model, std::span<const TokenId>(ids));
}

// Logits of p(x1 | z, theta); z is [B x d_z].
template <class T>
Tensor<T> decode_first_token(const ArnModel<T>& model, const Tensor<T>& z) {
  if (z.rank() != 2 || z.cols() != model.dims.latent) {
    throw ShapeError("decode_first_token: z " + to_string(z.shape()) + " but latent dim is " +
                     std::to_string(model.dims.latent));
  }
  return model.decoder(z);
}

// One generator step: next-token logits [B x V] and the new state.
template <class T>
std::pair<Tensor<T>, RnnState<T>> lstm_step(const ArnModel<T>& model, const Tensor<T>& input,
                                            const RnnState<T>& state) {
  auto next = lstm_cell_step(model.generator, input, state);
  auto logits = model.output(next.h);
  return {std::move(logits), std::move(next)};
}

// log p(x1 | z, theta) per row: [B].
template <class T>
Tensor<T> first_token_log_prob(const ArnModel<T>& model, std::span<const TokenId> x1,
                               const Tensor<T>& z) {
  detail::check_ids(x1, model.dims.vocab);
  if (z.rows() != x1.size()) throw ShapeError("first_token_log_prob: batch size mismatch");
  return pick(log_softmax(decode_first_token(model, z)), x1);
}

// sum_{i>=2} log p(x_i | h_{i-1}, theta) per row under teacher forcing: [B].
// The chain starts from a zero state with x1 as the first input.
template <class T>
Tensor<T> autoregressive_log_prob(const ArnModel<T>& model, std::span<const TokenSequence> batch) {
  detail::check_batch(model, batch);
  const std::size_t len = batch[0].length();
  const std::size_t n = batch.size();
  if (len < 2) return Tensor<T>::zeros({n});
  auto state = RnnState<T>::zeros(n, model.dims.hidden);
  auto prev = detail::column(batch, 0);
  Tensor<T> total;
  for (std::size_t t = 1; t < len; ++t) {
    auto [logits, next] = lstm_step(model, gather_rows(model.embedding, std::span<const TokenId>(prev)), state);
    const auto ids = detail::column(batch, t);
    auto lp = pick(log_softmax(logits), std::span<const TokenId>(ids));
    total = t == 1 ? lp : add(total, lp);
    state = std::move(next);
    prev = ids;
  }
  return total;
}

// log p(x1 | z) + sum_{i>=2} log p(x_i | h_{i-1}) per row: [B].
template <class T>
Tensor<T> sequence_log_likelihood(const ArnModel<T>& model, std::span<const TokenSequence> batch,
                                  const Tensor<T>& z) {
  detail::check_batch(model, batch);
  const auto x1 = detail::column(batch, 0);
  return add(first_token_log_prob(model, std::span<const TokenId>(x1), z),
             autoregressive_log_prob(model, batch));
}

template <class T>
T sequence_log_likelihood(const ArnModel<T>& model, const TokenSequence& x, const Tensor<T>& z) {
  const Tensor<T> zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  return sequence_log_likelihood(model, std::span<const TokenSequence>(&x, 1), zz).item();
}

template <class T>
SoftSequence<T> one_hot(std::span<const TokenSequence> batch, std::size_t vocab) {
  if (batch.empty()) throw ConfigError("one_hot: empty batch");
  SoftSequence<T> out;
  for (std::size_t t = 0; t < batch[0].length(); ++t) {
    std::vector<T> rows(batch.size() * vocab, T(0));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (batch[b][t] >= vocab) throw VocabError("one_hot: id outside vocabulary");
      rows[b * vocab + batch[b][t]] = T(1);
    }
    out.rows.emplace_back(Shape{batch.size(), vocab}, std::move(rows));
  }
  return out;
}

// Pre-sigmoid discriminator scores [B]. Rows are embedded as row * table so
// hard and relaxed sequences share one pathway.
template <class T>
Tensor<T> discriminator_logits(const ArnModel<T>& model, const SoftSequence<T>& x) {
  if (x.rows.empty()) throw ShapeError("discriminate: empty sequence");
  const std::size_t n = x.batch();
  auto state = RnnState<T>::zeros(n, model.dims.disc_hidden);
  for (const auto& row : x.rows) {
    if (row.rank() != 2 || row.rows() != n || row.cols() != model.dims.vocab) {
      throw ShapeError("discriminate: row " + to_string(row.shape()) + " expected [" +
                       std::to_string(n) + "," + std::to_string(model.dims.vocab) + "]");
    }
    state = lstm_cell_step(model.disc_cell, matmul(row, model.disc_embedding), state);
  }
  return reshape(model.disc_head(state.h), {n});
}

template <class T>
Tensor<T> discriminate(const ArnModel<T>& model, const SoftSequence<T>& x) {
  return sigmoid(discriminator_logits(model, x));
}

template <class T>
Tensor<T> discriminate(const ArnModel<T>& model, std::span<const TokenSequence> batch) {
  detail::check_batch(model, batch);
  return discriminate(model, one_hot<T>(batch, model.dims.vocab));
}

// Uniform noise for one relaxed rollout: one [B x V] tensor per step.
template <class T>
std::vector<Tensor<T>> draw_rollout_uniforms(const ModelDims& d, std::size_t batch, Rng& rng) {
  std::vector<Tensor<T>> u;
  u.reserve(d.seq_len);
  for (std::size_t t = 0; t < d.seq_len; ++t) u.push_back(draw_gumbel_uniforms<T>(rng, {batch, d.vocab}));
  return u;
}

// G(z) with every token replaced by a Gumbel-Softmax row; each row times the
// embedding table feeds the next step.
template <class T>
SoftSequence<T> generate_relaxed(const ArnModel<T>& model, const Tensor<T>& z, const GumbelConfig& cfg,
                                 const std::vector<Tensor<T>>& uniforms) {
  if (!(cfg.temperature > 0.0)) throw DomainError("generate_relaxed: temperature must be positive");
  if (uniforms.size() != model.dims.seq_len) {
    throw ShapeError("generate_relaxed: need one noise tensor per step");
  }
  SoftSequence<T> out;
  auto row = gumbel_softmax(decode_first_token(model, z), cfg, uniforms[0]);
  out.rows.push_back(row);
  auto state = RnnState<T>::zeros(z.rows(), model.dims.hidden);
  for (std::size_t t = 1; t < model.dims.seq_len; ++t) {
    auto [logits, next] = lstm_step(model, matmul(row, model.embedding), state);
    row = gumbel_softmax(logits, cfg, uniforms[t]);
    out.rows.push_back(row);
    state = std::move(next);
  }
  return out;
}

template <class T>
SoftSequence<T> generate_relaxed(const ArnModel<T>& model, const Tensor<T>& z, const GumbelConfig& cfg,
                                 Rng& rng) {
  return generate_relaxed(model, z, cfg, draw_rollout_uniforms<T>(model.dims, z.rows(), rng));
}

enum class GenerationMode { noise, decoded_x1 };

// How decoded-x1 mode uses its seed token. `encode` maps the real token to
// z ~ q(z | x1) and decodes x1 from z; `feed_real` keeps the real token as x1.
enum class FirstTokenPolicy { encode, feed_real };

struct GenerateRequest {
  GenerationMode mode = GenerationMode::noise;
  std::size_t count = 1;
  std::vector<TokenId> seed_tokens;  // one per sequence, or a single shared token
  bool argmax = false;
  FirstTokenPolicy policy = FirstTokenPolicy::encode;
};

template <class T>
std::vector<TokenSequence> generate(const ArnModel<T>& trained, const GenerateRequest& req, Rng& rng) {
  if (req.count == 0) return {};
  const auto& d = trained.dims;
  const ArnModel<T> model = trained.frozen();
  const std::size_t n = req.count;

  std::vector<TokenId> seeds;
  if (req.mode == GenerationMode::decoded_x1) {
    if (req.seed_tokens.empty()) throw ConfigError("generate: decoded-x1 mode needs a seed token");
    if (req.seed_tokens.size() != 1 && req.seed_tokens.size() != n) {
      throw ConfigError("generate: need one seed token or one per sequence");
    }
    seeds = req.seed_tokens.size() == 1 ? std::vector<TokenId>(n, req.seed_tokens[0]) : req.seed_tokens;
    detail::check_ids(seeds, d.vocab);
  }

  auto sample_rows = [&](const Tensor<T>& logits) {
    const auto probs = softmax(logits);
    std::vector<TokenId> ids(n);
    std::vector<double> row(d.vocab);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t j = 0; j < d.vocab; ++j) row[j] = static_cast<double>(probs.at(b, j));
      ids[b] = req.argmax ? detail::argmax_lowest(row) : rng.categorical(row);
    }
    return ids;
  };

  std::vector<TokenId> x1;
  if (req.mode == GenerationMode::decoded_x1 && req.policy == FirstTokenPolicy::feed_real) {
    x1 = seeds;
  } else {
    std::vector<T> eps(n * d.latent);
    for (auto& e : eps) e = static_cast<T>(rng.normal());
    Tensor<T> z({n, d.latent}, std::move(eps));
    if (req.mode == GenerationMode::decoded_x1) {
      z = reparam_sample(encode_first_token(model, std::span<const TokenId>(seeds)), z);
    }
    x1 = sample_rows(decode_first_token(model, z));
  }

  std::vector<std::vector<TokenId>> ids(n, std::vector<TokenId>(d.seq_len));
  for (std::size_t b = 0; b < n; ++b) ids[b][0] = x1[b];
  auto state = RnnState<T>::zeros(n, d.hidden);
  auto prev = x1;
  for (std::size_t t = 1; t < d.seq_len; ++t) {
    auto [logits, next] = lstm_step(model, gather_rows(model.embedding, std::span<const TokenId>(prev)), state);
    prev = sample_rows(logits);
    for (std::size_t b = 0; b < n; ++b) ids[b][t] = prev[b];
    state = std::move(next);
  }
  std::vector<TokenSequence> out;
  out.reserve(n);
  for (auto& s : ids) out.emplace_back(std::move(s), d.vocab);
  return out;
}

}  // namespace arn
