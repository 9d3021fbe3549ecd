#pragma once

// n-gram quality and diversity scores, all reported as percentages.
//
//   Diversity-n  = 100 * |distinct generated n-grams| / |generated n-grams|
//   FC-n         = 100 * |distinct generated n-grams also in the test set|
//                        / |generated n-grams|
//   BLEU-n       = 100 * BP * exp(mean_k ln p_k), k = 1..n, clipped
//                  precisions against every reference, no smoothing.
//
// Sentences shorter than n simply contribute no n-grams.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <optional>
#include <iterator>
#include <set>
#include <string>
#include <tuple>
#include <span>
#include <vector>

#include "arn/errors.hpp"
#include "arn/networks.hpp"

namespace arn {

template <class Tok>
using Sentence = std::vector<Tok>;

template <class Tok>
struct NGramTable {
  std::size_t n = 0;
  std::map<std::vector<Tok>, std::size_t> counts;
  std::size_t total = 0;

  std::size_t distinct() const { return counts.size(); }
};

template <class Tok>
void add_ngrams(NGramTable<Tok>& table, const Sentence<Tok>& s) {
  const std::size_t n = table.n;
  if (s.size() < n) return;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++table.counts[std::vector<Tok>(s.begin() + i, s.begin() + i + n)];
    ++table.total;
  }
}

template <class Tok>
NGramTable<Tok> ngram_table(std::span<const Sentence<Tok>> sentences, std::size_t n) {
  if (n == 0) throw ConfigError("n-gram order must be >= 1");
  NGramTable<Tok> t;
  t.n = n;
  for (const auto& s : sentences) add_ngrams(t, s);
  return t;
}

template <class Tok>
double diversity_n(std::span<const Sentence<Tok>> generated, std::size_t n) {
  const auto t = ngram_table(generated, n);
  if (t.total == 0) throw EmptyInputError("diversity: no " + std::to_string(n) + "-grams generated");
  return 100.0 * static_cast<double>(t.distinct()) / static_cast<double>(t.total);
}

template <class Tok>
double fc_n(std::span<const Sentence<Tok>> generated, std::span<const Sentence<Tok>> test, std::size_t n) {
  if (test.empty()) throw EmptyInputError("feature coverage: empty test set");
  const auto gen = ngram_table(generated, n);
  if (gen.total == 0) throw EmptyInputError("feature coverage: no " + std::to_string(n) + "-grams generated");
  const auto ref = ngram_table(test, n);
  std::size_t covered = 0;
  for (const auto& [gram, count] : gen.counts) covered += ref.counts.count(gram);
  return 100.0 * static_cast<double>(covered) / static_cast<double>(gen.total);
}

// Reference set prepared once: per-order maximum count of each gram over all
// references, plus the sorted multiset of reference lengths.
template <class Tok>
class BleuReferences {
 public:
  BleuReferences(std::span<const Sentence<Tok>> refs, std::size_t max_order) : max_order_(max_order) {
    if (refs.empty()) throw EmptyInputError("BLEU: no references");
    if (max_order == 0) throw ConfigError("BLEU: order must be >= 1");
    max_counts_.resize(max_order);
    for (const auto& r : refs) {
      lengths_.insert(r.size());
      for (std::size_t k = 1; k <= max_order; ++k) {
        NGramTable<Tok> t;
        t.n = k;
        add_ngrams(t, r);
        auto& dst = max_counts_[k - 1];
        for (const auto& [gram, c] : t.counts) {
          auto& slot = dst[gram];
          slot = std::max(slot, c);
        }
      }
    }
  }

  std::size_t max_order() const { return max_order_; }

  // Reference length closest to c; ties go to the shorter reference.
  std::size_t closest_length(std::size_t c) const {
    auto it = lengths_.lower_bound(c);
    if (it == lengths_.end()) return *std::prev(it);
    if (*it == c || it == lengths_.begin()) return *it;
    const std::size_t above = *it, below = *std::prev(it);
    return (c - below) <= (above - c) ? below : above;
  }

  // Clipped matches and candidate gram count at order k.
  std::pair<std::size_t, std::size_t> clipped(const Sentence<Tok>& cand, std::size_t k) const {
    NGramTable<Tok> t;
    t.n = k;
    add_ngrams(t, cand);
    std::size_t match = 0;
    const auto& ref = max_counts_[k - 1];
    for (const auto& [gram, c] : t.counts) {
      auto it = ref.find(gram);
      if (it != ref.end()) match += std::min(c, it->second);
    }
    return {match, t.total};
  }

 private:
  std::size_t max_order_;
  std::vector<std::map<std::vector<Tok>, std::size_t>> max_counts_;
  std::set<std::size_t> lengths_;
};

namespace detail {

inline double bleu_from_counts(std::span<const std::size_t> match, std::span<const std::size_t> total,
                               std::size_t cand_len, std::size_t ref_len) {
  double log_sum = 0.0;
  for (std::size_t k = 0; k < match.size(); ++k) {
    if (total[k] == 0 || match[k] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[k]) / static_cast<double>(total[k]));
  }
  const double c = static_cast<double>(cand_len), r = static_cast<double>(ref_len);
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(match.size()));
}

}  // namespace detail

template <class Tok>
double bleu_n(const Sentence<Tok>& candidate, const BleuReferences<Tok>& refs, std::size_t n) {
  if (n == 0 || n > refs.max_order()) throw ConfigError("BLEU: order outside prepared range");
  std::vector<std::size_t> match(n), total(n);
  for (std::size_t k = 1; k <= n; ++k) std::tie(match[k - 1], total[k - 1]) = refs.clipped(candidate, k);
  return detail::bleu_from_counts(match, total, candidate.size(), refs.closest_length(candidate.size()));
}

template <class Tok>
double bleu_n(const Sentence<Tok>& candidate, std::span<const Sentence<Tok>> references, std::size_t n) {
  return bleu_n(candidate, BleuReferences<Tok>(references, n), n);
}

enum class BleuMode {
  sentence_mean,  // mean of per-sentence scores against the whole test set
  corpus,         // counts and lengths aggregated over all candidates first
};

template <class Tok>
double corpus_bleu_n(std::span<const Sentence<Tok>> generated, std::span<const Sentence<Tok>> test,
                     std::size_t n, BleuMode mode = BleuMode::sentence_mean) {
  if (generated.empty()) throw EmptyInputError("BLEU: no generated sentences");
  if (test.empty()) throw EmptyInputError("BLEU: empty test set");
  const BleuReferences<Tok> refs(test, n);
  if (mode == BleuMode::sentence_mean) {
    double acc = 0.0;
    for (const auto& s : generated) acc += bleu_n(s, refs, n);
    return acc / static_cast<double>(generated.size());
  }
  std::vector<std::size_t> match(n, 0), total(n, 0);
  std::size_t c = 0, r = 0;
  for (const auto& s : generated) {
    for (std::size_t k = 1; k <= n; ++k) {
      const auto [m, t] = refs.clipped(s, k);
      match[k - 1] += m;
      total[k - 1] += t;
    }
    c += s.size();
    r += refs.closest_length(s.size());
  }
  return detail::bleu_from_counts(match, total, c, r);
}

struct MetricsReport {
  std::map<std::size_t, double> bleu;
  std::map<std::size_t, double> diversity;
  std::map<std::size_t, double> fc;
  std::size_t samples = 0;
};

template <class Tok>
MetricsReport full_report(std::span<const Sentence<Tok>> generated, std::span<const Sentence<Tok>> test,
                          std::span<const std::size_t> orders, BleuMode mode = BleuMode::sentence_mean) {
  if (generated.empty()) throw EmptyInputError("report: no generated sentences");
  if (test.empty()) throw EmptyInputError("report: empty test set");
  MetricsReport rep;
  rep.samples = generated.size();
  for (std::size_t n : orders) {
    rep.bleu[n] = corpus_bleu_n(generated, test, n, mode);
    rep.diversity[n] = diversity_n(generated, n);
    rep.fc[n] = fc_n(generated, test, n);
  }
  return rep;
}

// Id lists for scoring; `pad` tokens, when given, are dropped.
inline std::vector<Sentence<TokenId>> to_sentences(std::span<const TokenSequence> seqs,
                                                   std::optional<TokenId> pad = std::nullopt) {
  std::vector<Sentence<TokenId>> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    Sentence<TokenId> ids;
    for (TokenId id : s.ids()) {
      if (!pad || id != *pad) ids.push_back(id);
    }
    out.push_back(std::move(ids));
  }
  return out;
}

}  // namespace arn
