// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "arn/arn.hpp"
#include "arn/commands.hpp"
#include "support/ngram_oracle.hpp"

namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 120;
constexpr std::size_t kKlPosteriors = 50;
constexpr std::size_t kKlSamples = 100000;
constexpr double kKlSigmas = 3.0;
constexpr double kKlQuotedTol = 1e-9;
constexpr std::size_t kGumbelDraws = 100000;
constexpr double kGumbelFreqTol = 0.01;
// chi-square upper 0.001 points, df = 1..7
constexpr double kChi2Crit001[] = {10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322};
constexpr std::size_t kGames = 100;
constexpr double kGridResolution = 1e-5;
constexpr double kDstarTol = 1e-4;
constexpr std::size_t kIdentityPairs = 1000;
constexpr double kIdentityTol = 1e-10;
constexpr std::size_t kNashStarts = 20;
constexpr double kNashTol = 1e-3;
constexpr double kNashSeconds = 60;
constexpr std::size_t kMicroCorpora = 200;
constexpr std::size_t kMarkovK = 8;
constexpr std::size_t kMarkovT = 8;
constexpr std::size_t kMarkovSequences = 2000;
constexpr std::size_t kTrainSteps = 5000;
constexpr double kBigramTvTol = 0.2;
constexpr double kDiversityBand = 15.0;
constexpr double kTrainSeconds = 900;
constexpr double kAblationTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  [%2d] %-28s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void run(int id, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, name, ok, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / ("arn_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Each state mostly steps +1, sometimes +3, rarely anywhere.
arn::MarkovSource desk_source() {
  arn::MarkovSource src;
  for (std::size_t i = 0; i < kMarkovK; ++i) src.states.push_back("s" + std::to_string(i));
  src.initial = arn::Categorical::uniform(kMarkovK);
  for (std::size_t i = 0; i < kMarkovK; ++i) {
    std::vector<double> row(kMarkovK, 0.02);
    row[(i + 1) % kMarkovK] += 0.6;
    row[(i + 3) % kMarkovK] += 0.25;
    src.transitions.push_back(arn::Categorical::normalized(row));
  }
  return src;
}

// 1 ------------------------------------------------------------------------
std::pair<bool, std::string> gradient_suite() {
  const auto t0 = Clock::now();
  arn::GradCheckConfig cfg;
  const auto rep = arn::run_gradcheck(arn::ModelDims::desk(), cfg);
  const double secs = seconds_since(t0);
  std::string detail = fmt("max_rel_err=%.2e (<=%.0e) time=%.1fs (<%.0fs)", rep.max_error, kGradTol, secs,
                           kGradSeconds);
  for (const auto& [loss, err] : rep.errors) detail += fmt(" %s=%.1e", loss.c_str(), err);
  return {rep.max_error <= kGradTol && rep.errors.size() == 4 && secs < kGradSeconds, detail};
}

// 2 ------------------------------------------------------------------------
double kl_of(double mu, double log_var) {
  const arn::GaussianPosterior<double> q{arn::Tensor<double>({1, 1}, {mu}), arn::Tensor<double>({1, 1}, {log_var})};
  return arn::kl_gauss_std(q).item();
}

std::pair<bool, std::string> kl_correctness() {
  const double quoted[3][3] = {{0, 0, 0}, {1, 0, 0.5}, {0, 1, (std::numbers::e - 2) / 2}};
  double quoted_err = 0;
  for (const auto& c : quoted) quoted_err = std::max(quoted_err, std::abs(kl_of(c[0], c[1]) - c[2]));

  arn::Rng rng(2);
  double worst_z = 0;
  for (std::size_t t = 0; t < kKlPosteriors; ++t) {
    const std::size_t d = 1 + rng.below(4);
    std::vector<double> mu(d), lv(d);
    for (auto& m : mu) m = rng.normal();
    for (auto& l : lv) l = 2 * rng.uniform() - 1;
    const arn::GaussianPosterior<double> q{arn::Tensor<double>({1, d}, mu), arn::Tensor<double>({1, d}, lv)};
    const double exact = arn::kl_gauss_std(q).item();
    // log q(z) - log p(z) at z = mu + sigma * eps
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < kKlSamples; ++n) {
      double v = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = rng.normal(), z = mu[i] + std::exp(0.5 * lv[i]) * e;
        v += -0.5 * lv[i] - 0.5 * e * e + 0.5 * z * z;
      }
      s += v;
      s2 += v * v;
    }
    const double m = s / kKlSamples, se = std::sqrt((s2 / kKlSamples - m * m) / kKlSamples);
    worst_z = std::max(worst_z, std::abs(m - exact) / se);
  }
  return {quoted_err <= kKlQuotedTol && worst_z <= kKlSigmas,
          fmt("quoted_err=%.1e (<=%.0e) worst_mc=%.2f SE (<=%.0f) over %zu posteriors", quoted_err, kKlQuotedTol,
              worst_z, kKlSigmas, kKlPosteriors)};
}

// 3 ------------------------------------------------------------------------
std::pair<bool, std::string> gumbel_max_law() {
  arn::Rng rng(3);
  double worst_freq = 0, worst_ratio = 0;
  for (std::size_t k = 2; k <= 8; ++k) {
    std::vector<double> logit(k);
    for (auto& l : logit) l = rng.normal();
    std::vector<double> rows;
    rows.reserve(kGumbelDraws * k);
    for (std::size_t n = 0; n < kGumbelDraws; ++n) rows.insert(rows.end(), logit.begin(), logit.end());
    const arn::Tensor<double> logits({kGumbelDraws, k}, rows);
    const auto u = arn::draw_gumbel_uniforms<double>(rng, {kGumbelDraws, k});
    const auto y = arn::gumbel_softmax(logits, {1.0, false}, u);
    const auto v = y.data();
    std::vector<double> counts(k, 0);
    for (std::size_t n = 0; n < kGumbelDraws; ++n) {
      const auto row = v.subspan(n * k, k);
      counts[std::max_element(row.begin(), row.end()) - row.begin()] += 1;
    }
    const auto p = arn::softmax_of(logit);
    double chi2 = 0;
    for (std::size_t i = 0; i < k; ++i) {
      worst_freq = std::max(worst_freq, std::abs(counts[i] / kGumbelDraws - p[i]));
      const double e = p[i] * kGumbelDraws;
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    worst_ratio = std::max(worst_ratio, chi2 / kChi2Crit001[k - 2]);
  }
  return {worst_freq <= kGumbelFreqTol && worst_ratio < 1.0,
          fmt("max|freq-p|=%.4f (<=%.2f) max chi2/crit=%.3f (<1) K=2..8", worst_freq, kGumbelFreqTol, worst_ratio)};
}

// 4 ------------------------------------------------------------------------
std::pair<bool, std::string> optimal_discriminator() {
  arn::Rng rng(4);
  double worst = 0;
  for (std::size_t g = 0; g < kGames; ++g) {
    const std::size_t k = 2 + g % 7;
    const auto pd = arn::Categorical::random(k, rng), pg = arn::Categorical::random(k, rng);
    const auto dstar = arn::optimal_discriminator(pd, pg);
    const auto grid = arn::grid_search_discriminator(pd, pg, kGridResolution);
    for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(*dstar[i] - grid[i]));
  }
  return {worst <= kDstarTol, fmt("max|D*-grid|=%.2e (<=%.0e) over %zu games, K<=8", worst, kDstarTol, kGames)};
}

// 5 ------------------------------------------------------------------------
std::pair<bool, std::string> identity() {
  arn::Rng rng(5);
  double worst = 0;
  for (std::size_t t = 0; t < kIdentityPairs; ++t) {
    const std::size_t k = 2 + rng.below(15);
    const auto r = arn::verify_identity(arn::Categorical::random(k, rng), arn::Categorical::random(k, rng));
    worst = std::max(worst, r.gap);
  }
  return {worst <= kIdentityTol, fmt("max|lhs-rhs|=%.2e (<=%.0e) over %zu pairs", worst, kIdentityTol, kIdentityPairs)};
}

// 6 ------------------------------------------------------------------------
std::pair<bool, std::string> nash_recovery() {
  const auto t0 = Clock::now();
  arn::Rng rng(6);
  double worst = 0;
  std::size_t failed = 0;
  for (std::size_t k : {2u, 4u, 8u}) {
    const auto pd = arn::Categorical::random(k, rng);
    for (std::size_t s = 0; s < kNashStarts; ++s) {
      const auto init = arn::Categorical::random(k, rng);
      try {
        worst = std::max(worst, arn::solve_nash(pd, init).tv);
      } catch (const arn::ConvergenceError& e) {
        worst = std::max(worst, e.best_tv);
        ++failed;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && worst <= kNashTol && secs < kNashSeconds,
          fmt("max TV=%.2e (<=%.0e) unconverged=%zu time=%.1fs (<%.0fs) K in {2,4,8} x %zu starts", worst,
              kNashTol, failed, secs, kNashSeconds, kNashStarts)};
}

// 7 ------------------------------------------------------------------------
IdCorpus random_micro_corpus(arn::Rng& rng) {
  const std::size_t v = 2 + rng.below(4);
  IdCorpus c(1 + rng.below(6));
  for (auto& s : c) {
    s.resize(1 + rng.below(6));
    for (auto& t : s) t = rng.below(v);
  }
  return c;
}

arn::Sentence<std::string> words(const std::string& text) {
  std::istringstream is(text);
  arn::Sentence<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::pair<bool, std::string> metric_oracles() {
  using SCorpus = std::vector<arn::Sentence<std::string>>;
  const SCorpus gen{words("a b a"), words("a b c")};
  const double div = arn::diversity_n<std::string>(gen, 2);
  const double fc = arn::fc_n<std::string>(gen, SCorpus{words("a b d")}, 2);
  const double b2 = arn::bleu_n<std::string>(words("a b c d"), SCorpus{words("a b x"), words("c d y")}, 2);
  const double b1 = arn::bleu_n<std::string>(words("the the the"), SCorpus{words("the cat")}, 1);
  const bool worked = div == 75.0 && fc == 25.0 && std::round(b2 * 100) / 100 == 81.65 &&
                      std::round(b1 * 100) / 100 == 33.33;

  arn::Rng rng(7);
  std::size_t mismatches = 0, comparisons = 0;
  for (std::size_t t = 0; t < kMicroCorpora; ++t) {
    const auto g = random_micro_corpus(rng), r = random_micro_corpus(rng);
    for (std::size_t n = 1; n <= 3; ++n) {
      if (!brute::all_grams(g, n).empty()) {
        mismatches += arn::diversity_n<arn::TokenId>(g, n) != brute::diversity(g, n);
        mismatches += arn::fc_n<arn::TokenId>(g, r, n) != brute::fc(g, r, n);
        comparisons += 2;
      }
      mismatches += arn::corpus_bleu_n<arn::TokenId>(g, r, n) != brute::sentence_mean_bleu(g, r, n);
      ++comparisons;
    }
  }
  return {worked && mismatches == 0,
          fmt("worked div=%.2f fc=%.2f bleu2=%.2f bleu1=%.2f; oracle mismatches=%zu/%zu on %zu corpora", div, fc, b2,
              b1, mismatches, comparisons, kMicroCorpora)};
}

// 8 ------------------------------------------------------------------------
std::pair<bool, std::string> desk_training() {
  const auto t0 = Clock::now();
  const auto src = desk_source();
  arn::Rng corpus_rng(8);
  const auto corpus = arn::sample_markov(src, kMarkovT, kMarkovSequences, corpus_rng);

  auto dims = arn::ModelDims::desk();
  dims.vocab = kMarkovK;
  dims.seq_len = kMarkovT;
  arn::TrainConfig cfg;
  cfg.steps = kTrainSteps;
  cfg.seed = 8;
  arn::RandomStreams streams(cfg.seed);
  auto model = arn::ArnModel<double>::random(dims, streams.init);
  try {
    arn::train(model, std::span<const arn::TokenSequence>(corpus), cfg);
  } catch (const arn::TrainingAborted& e) {
    return {false, std::string("training aborted: ") + e.what()};
  }

  arn::GenerateRequest req;
  req.count = kMarkovSequences;
  arn::Rng gen_rng(9);
  const auto generated = arn::generate(model, req, gen_rng);
  const double secs = seconds_since(t0);

  const auto exact = arn::source_ngram_distribution(src, 2, kMarkovT);
  const double tv = arn::total_variation(exact, arn::empirical_ngram_distribution(generated, 2, kMarkovK));
  const double div_gen = arn::diversity_n<arn::TokenId>(arn::to_sentences(generated), 2);
  const double div_src = arn::diversity_n<arn::TokenId>(arn::to_sentences(corpus), 2);
  return {tv <= kBigramTvTol && std::abs(div_gen - div_src) <= kDiversityBand && secs < kTrainSeconds,
          fmt("bigram TV=%.4f (<=%.1f) div2 gen=%.2f src=%.2f (band %.0f) time=%.0fs (<%.0fs) no abort", tv,
              kBigramTvTol, div_gen, div_src, kDiversityBand, secs, kTrainSeconds)};
}

// 9 ------------------------------------------------------------------------
std::pair<bool, std::string> ablation() {
  const auto src = desk_source();
  arn::Rng corpus_rng(90);
  const auto corpus = arn::sample_markov(src, kMarkovT, 64, corpus_rng);
  auto dims = arn::ModelDims::desk();
  dims.vocab = kMarkovK;
  dims.seq_len = kMarkovT;
  arn::TrainConfig cfg;
  cfg.steps = 50;
  cfg.batch_size = 8;
  cfg.seed = 91;
  cfg.lambda_adv = 0.0;
  arn::Rng init_rng(92);
  auto model = arn::ArnModel<double>::random(dims, init_rng);
  auto ref = model.clone();
  const auto trace = arn::train(model, std::span<const arn::TokenSequence>(corpus), cfg);

  // plain ELBO maximization on the same batches and noise
  arn::RandomStreams streams(cfg.seed);
  arn::BatchSampler sampler(std::span<const arn::TokenSequence>(corpus), streams.shuffle);
  std::vector<arn::Tensor<double>> params;
  for (const auto& p : ref.generator_parameters()) params.push_back(p.tensor);
  arn::Adam<double> opt(params, cfg.generator_adam);
  double worst = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = sampler.next(cfg.batch_size);
    arn::GeneratorNoise<double>::normal_matrix(streams.latent, batch.size(), dims.latent);
    arn::draw_rollout_uniforms<double>(dims, batch.size(), streams.gumbel);
    const auto eps = arn::GeneratorNoise<double>::normal_matrix(streams.noise, batch.size(), dims.latent);
    arn::GeneratorNoise<double>::normal_matrix(streams.latent, batch.size(), dims.latent);
    arn::draw_rollout_uniforms<double>(dims, batch.size(), streams.gumbel);
    const auto terms = arn::elbo_terms(ref, std::span<const arn::TokenSequence>(batch), eps);
    const auto loss = arn::neg(terms.total());
    worst = std::max(worst, std::abs(trace[step].g_loss - loss.item()));
    arn::backward(loss);
    opt.step();
    opt.zero_grad();
  }
  const auto a = model.generator_parameters(), b = ref.generator_parameters();
  double param_gap = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    for (std::size_t j = 0; j < x.size(); ++j) param_gap = std::max(param_gap, std::abs(x[j] - y[j]));
  }
  return {worst <= kAblationTol && param_gap <= kAblationTol,
          fmt("max|loss diff|=%.1e max|param diff|=%.1e (<=%.0e) over %zu steps", worst, param_gap, kAblationTol,
              cfg.steps)};
}

// 10 -----------------------------------------------------------------------
std::pair<bool, std::string> determinism() {
  const auto dir = scratch();
  const auto source = dir / "source.json";
  std::ofstream(source) << arn::markov_to_json(desk_source()).dump();
  auto run_once = [&](const std::string& tag) {
    arn::RunConfig cfg;
    cfg.markov = source;
    cfg.markov_samples = 500;
    cfg.seq_len = kMarkovT;
    cfg.vocab = dir / (tag + ".vocab");
    cfg.checkpoint = dir / (tag + ".arn");
    cfg.train.steps = 200;
    cfg.train.seed = 10;
    std::ostringstream log;
    const int rc = arn::cmd_train(cfg, log);
    return std::pair{rc, slurp(cfg.checkpoint)};
  };
  const auto [rc_a, a] = run_once("a");
  const auto [rc_b, b] = run_once("b");
  fs::remove_all(dir);
  return {rc_a == 0 && rc_b == 0 && !a.empty() && a == b,
          fmt("exit=%d,%d checkpoint bytes=%zu identical=%s", rc_a, rc_b, a.size(), a == b ? "yes" : "no")};
}

}  // namespace

int main() {
  run(1, "gradient suite", gradient_suite);
  run(2, "KL closed form", kl_correctness);
  run(3, "Gumbel-max law", gumbel_max_law);
  run(4, "optimal discriminator", optimal_discriminator);
  run(5, "divergence identity", identity);
  run(6, "Nash recovery", nash_recovery);
  run(7, "metric oracles", metric_oracles);
  run(8, "desk-scale training", desk_training);
  run(9, "adversarial ablation", ablation);
  run(10, "determinism", determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
