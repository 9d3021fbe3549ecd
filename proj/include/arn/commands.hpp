#pragma once

// Subcommand bodies behind the `arn` executable. Each returns a process exit
// code: 0 success, 2 usage or input error, 3 numeric failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arn/checkpoint.hpp"
#include "arn/corpus.hpp"
#include "arn/divergence_lab.hpp"
#include "arn/errors.hpp"
#include "arn/gradcheck.hpp"
#include "arn/metrics.hpp"
#include "arn/networks.hpp"
#include "arn/objectives.hpp"
#include "arn/rng.hpp"
#include "arn/train.hpp"

namespace arn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

inline ModelDims preset_dims(const std::string& name) {
  if (name == "desk") return ModelDims::desk();
  if (name == "paper") return ModelDims::paper();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

struct RunConfig {
  std::string preset = "desk";
  std::optional<std::filesystem::path> corpus;  // plain text, one sentence per line
  std::optional<std::filesystem::path> markov;  // JSON source to sample a corpus from
  std::size_t markov_samples = 2000;
  std::filesystem::path vocab = "vocab.txt";
  std::filesystem::path checkpoint = "model.arn";
  std::optional<std::filesystem::path> trace;
  std::string dtype = "f64";
  TrainConfig train{};

  // Size overrides applied on top of the preset (0 keeps the preset value).
  std::size_t vocab_size = 0;
  std::size_t seq_len = 0;
};

namespace detail {

inline void require_readable(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
}

inline void require_writable_parent(const std::filesystem::path& p) {
  const auto parent = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

inline nlohmann::json trace_json(const TraceRecord& r) {
  return {{"step", r.step},   {"d_loss", r.d_loss}, {"g_loss", r.g_loss}, {"recon", r.recon},
          {"kl", r.kl},       {"ar_loglik", r.ar_loglik}, {"adv", r.adv}, {"tau", r.tau}};
}

inline void write_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& trace) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : trace) os << trace_json(r).dump() << '\n';
}

struct PreparedCorpus {
  std::vector<TokenSequence> sequences;
  std::vector<std::string> vocab_tokens;  // line i of the vocabulary file
};

inline PreparedCorpus prepare_corpus(const RunConfig& cfg, ModelDims& dims) {
  PreparedCorpus out;
  if (cfg.markov) {
    const auto src = load_markov(*cfg.markov);
    Rng rng = Rng::stream(cfg.train.seed, "corpus");
    dims.vocab = src.size();
    out.sequences = sample_markov(src, dims.seq_len, cfg.markov_samples, rng);
    out.vocab_tokens = src.states;
  } else {
    std::vector<std::string> lines;
    for (auto& l : read_lines(*cfg.corpus)) {
      if (!tokenize(l).empty()) lines.push_back(std::move(l));
    }
    if (lines.empty()) throw EmptyInputError("corpus has no sentences: " + cfg.corpus->string());
    const auto vocab = build_vocab(lines, dims.vocab);
    dims.vocab = vocab.size();
    for (const auto& l : lines) {
      const auto toks = tokenize(l);
      out.sequences.push_back(encode_fixed(toks, vocab, dims.seq_len));
    }
    out.vocab_tokens = vocab.tokens();
  }
  if (out.sequences.empty()) throw EmptyInputError("training corpus is empty");
  return out;
}

template <class T>
int run_train(const RunConfig& cfg, std::ostream& log) {
  ModelDims dims = preset_dims(cfg.preset);
  if (cfg.vocab_size) dims.vocab = cfg.vocab_size;
  if (cfg.seq_len) dims.seq_len = cfg.seq_len;
  auto data = prepare_corpus(cfg, dims);
  write_lines(cfg.vocab, data.vocab_tokens);

  RandomStreams streams(cfg.train.seed);
  auto model = ArnModel<T>::random(dims, streams.init);
  const auto x1 = first_token_distribution(data.sequences, dims.vocab);
  const std::vector<CheckpointEntry> extras{
      {"meta/first_token_distribution", {dims.vocab}, DType::f64, x1.probs()}};
  const CheckpointSink<T> sink = [&](const ArnModel<T>& m, std::size_t) { save_model(cfg.checkpoint, m, extras); };

  std::vector<TraceRecord> trace;
  try {
    trace = train(model, std::span<const TokenSequence>(data.sequences), cfg.train, sink);
  } catch (const TrainingAborted& e) {
    if (cfg.trace) write_trace(*cfg.trace, e.trace);
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  save_model(cfg.checkpoint, model, extras);
  if (cfg.trace) write_trace(*cfg.trace, trace);
  log << "trained " << trace.size() << " steps on " << data.sequences.size() << " sequences; checkpoint "
      << cfg.checkpoint.string() << '\n';
  return kExitOk;
}

}  // namespace detail

inline int cmd_train(const RunConfig& cfg, std::ostream& log) {
  try {
    if (!cfg.corpus && !cfg.markov) throw ConfigError("train needs --corpus or --markov");
    if (cfg.corpus) detail::require_readable(*cfg.corpus);
    if (cfg.markov) detail::require_readable(*cfg.markov);
    detail::require_writable_parent(cfg.checkpoint);
    detail::require_writable_parent(cfg.vocab);
    if (cfg.trace) detail::require_writable_parent(*cfg.trace);
    cfg.train.validate();
    if (cfg.dtype == "f32") return detail::run_train<float>(cfg, log);
    if (cfg.dtype == "f64") return detail::run_train<double>(cfg, log);
    throw ConfigError("unknown dtype '" + cfg.dtype + "' (expected f32 or f64)");
  } catch (const NumericsError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ArnError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

struct GenerateConfig {
  std::filesystem::path checkpoint = "model.arn";
  std::filesystem::path vocab = "vocab.txt";
  std::string mode = "noise";  // noise | decoded-x1
  std::size_t count = 10;
  std::uint64_t seed = 0;
  bool argmax = false;
  bool feed_real_x1 = false;  // decoded-x1: keep the real token as x1 instead of decoding it
};

inline int cmd_generate(const GenerateConfig& cfg, std::ostream& out, std::ostream& log) {
  try {
    GenerateRequest req;
    if (cfg.mode == "noise") {
      req.mode = GenerationMode::noise;
    } else if (cfg.mode == "decoded-x1") {
      req.mode = GenerationMode::decoded_x1;
    } else {
      throw ConfigError("unknown mode '" + cfg.mode + "' (expected noise or decoded-x1)");
    }
    const auto loaded = load_model<double>(cfg.checkpoint);
    const auto tokens = read_lines(cfg.vocab);
    if (tokens.size() != loaded.model.dims.vocab) {
      throw ConfigError("vocabulary file has " + std::to_string(tokens.size()) + " tokens, model expects " +
                        std::to_string(loaded.model.dims.vocab));
    }
    if (cfg.count == 0) return kExitOk;
    req.count = cfg.count;
    req.argmax = cfg.argmax;
    req.policy = cfg.feed_real_x1 ? FirstTokenPolicy::feed_real : FirstTokenPolicy::encode;
    if (req.mode == GenerationMode::decoded_x1) {
      auto it = loaded.extras.find("meta/first_token_distribution");
      if (it == loaded.extras.end()) throw ConfigError("checkpoint lacks a first-token distribution");
      Rng seeds = Rng::stream(cfg.seed, "seed-tokens");
      const auto& probs = it->second.values;
      for (std::size_t i = 0; i < cfg.count; ++i) req.seed_tokens.push_back(seeds.categorical(probs));
    }
    Rng rng = Rng::stream(cfg.seed, "generate");
    for (const auto& seq : generate(loaded.model, req, rng)) {
      for (std::size_t t = 0; t < seq.length(); ++t) out << (t ? " " : "") << tokens[seq[t]];
      out << '\n';
    }
    return kExitOk;
  } catch (const NumericsError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ArnError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

inline nlohmann::json report_json(const MetricsReport& rep) {
  auto family = [](const std::map<std::size_t, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [n, v] : m) j[std::to_string(n)] = detail::round2(v);
    return j;
  };
  return {{"bleu", family(rep.bleu)}, {"fc", family(rep.fc)}, {"diversity", family(rep.diversity)},
          {"samples", rep.samples}};
}

// Whitespace-tokenized lines with <PAD> tokens removed; blank lines skipped.
inline std::vector<Sentence<std::string>> read_sentences(const std::filesystem::path& path) {
  const std::string pad = tokenize(kPadToken).front();
  std::vector<Sentence<std::string>> out;
  for (const auto& line : read_lines(path)) {
    auto toks = tokenize(line);
    std::erase(toks, pad);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

struct EvaluateConfig {
  std::filesystem::path generated;
  std::filesystem::path test;
  std::vector<std::size_t> orders{2, 3};
  bool corpus_bleu = false;
};

inline int cmd_evaluate(const EvaluateConfig& cfg, std::ostream& out, std::ostream& log) {
  try {
    const auto gen = read_sentences(cfg.generated);
    const auto test = read_sentences(cfg.test);
    if (gen.empty()) throw EmptyInputError("no generated sentences in " + cfg.generated.string());
    if (test.empty()) throw EmptyInputError("no test sentences in " + cfg.test.string());
    if (cfg.orders.empty()) throw ConfigError("no n-gram orders requested");
    const auto rep = full_report<std::string>(gen, test, cfg.orders,
                                              cfg.corpus_bleu ? BleuMode::corpus : BleuMode::sentence_mean);
    out << report_json(rep).dump(2) << '\n';
    return kExitOk;
  } catch (const ArnError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

inline constexpr double kGradCheckThreshold = 1e-4;

struct GradCheckConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  double init_range = 0.25;
  double temperature = 0.5;
  std::size_t max_coords = 0;  // per tensor; 0 = all (paper preset defaults to 8)
};

struct GradCheckReport {
  std::map<std::string, double> errors;
  double max_error = 0.0;
  bool passed() const { return max_error <= kGradCheckThreshold; }
};

// Finite-difference check of every training loss at random small parameters.
inline GradCheckReport run_gradcheck(const ModelDims& dims, const GradCheckConfig& cfg) {
  RandomStreams streams(cfg.seed);
  auto model = ArnModel<double>::random(dims, streams.init, cfg.init_range);
  std::vector<TokenSequence> batch;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    std::vector<TokenId> ids(dims.seq_len);
    for (auto& id : ids) id = streams.shuffle.below(dims.vocab);
    batch.emplace_back(std::move(ids), dims.vocab);
  }
  const std::span<const TokenSequence> real(batch);
  const auto noise = GeneratorNoise<double>::draw(dims, cfg.batch, streams);
  const GumbelConfig gumbel{cfg.temperature, false};
  const auto fake = generate_relaxed(model.frozen(), noise.z, gumbel, noise.uniforms);

  const auto gen = detail::tensors_of(model.generator_parameters());
  const auto disc = detail::tensors_of(model.discriminator_parameters());
  GradCheckOptions opts;
  opts.max_coords_per_tensor = cfg.max_coords;
  opts.seed = cfg.seed;

  GradCheckReport rep;
  rep.errors["elbo"] = grad_check([&] { return neg(elbo_terms(model, real, noise.eps).total()); }, gen, opts);
  rep.errors["discriminator"] = grad_check([&] { return discriminator_loss(model, real, fake); }, disc, opts);
  rep.errors["generator"] = grad_check(
      [&] { return generator_loss(model, real, GeneratorLossConfig{1.0, gumbel, false}, noise).total; }, gen, opts);
  rep.errors["generator_non_saturating"] = grad_check(
      [&] { return generator_loss(model, real, GeneratorLossConfig{1.0, gumbel, true}, noise).total; }, gen, opts);
  for (const auto& [name, e] : rep.errors) rep.max_error = std::max(rep.max_error, e);
  return rep;
}

inline int cmd_gradcheck(GradCheckConfig cfg, std::ostream& out, std::ostream& log) {
  try {
    const auto dims = preset_dims(cfg.preset);
    if (cfg.preset == "paper" && cfg.max_coords == 0) cfg.max_coords = 8;
    const auto rep = run_gradcheck(dims, cfg);
    nlohmann::json j = {{"preset", cfg.preset}, {"seed", cfg.seed}, {"threshold", kGradCheckThreshold},
                        {"losses", rep.errors}, {"max_error", rep.max_error}, {"pass", rep.passed()}};
    out << j.dump(2) << '\n';
    return rep.passed() ? kExitOk : kExitNumeric;
  } catch (const NumericsError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ArnError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

struct DivLabConfig {
  std::size_t trials = 100;
  std::size_t k = 4;
  std::uint64_t seed = 0;
};

inline nlohmann::json divlab_json(const DivLabReport& r) {
  return {{"identity_max_gap", r.identity_max_gap}, {"dstar_max_err", r.dstar_max_err},
          {"nash_tv", r.nash_tv}, {"trials", r.trials}};
}

inline int cmd_divlab(const DivLabConfig& cfg, std::ostream& out, std::ostream& log) {
  try {
    const auto rep = run_divergence_lab(cfg.trials, cfg.k, cfg.seed);
    out << divlab_json(rep).dump(2) << '\n';
    return rep.passed() ? kExitOk : kExitNumeric;
  } catch (const ArnError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace arn
