#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "arn/distributions.hpp"
#include "arn/errors.hpp"
#include "arn/networks.hpp"
#include "arn/rng.hpp"

namespace arn {

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; advances i.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    if (i + k >= s.size()) throw EncodingError("truncated UTF-8 sequence");
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) throw EncodingError("invalid UTF-8 continuation byte");
    return static_cast<char32_t>(b & 0x3F);
  };
  char32_t cp;
  std::size_t len;
  if (b0 < 0x80) {
    cp = b0;
    len = 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | cont(1);
    len = 2;
    if (cp < 0x80) throw EncodingError("overlong UTF-8 sequence");
  } else if ((b0 & 0xF0) == 0xE0) {
    cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2);
    len = 3;
    if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) throw EncodingError("invalid UTF-8 sequence");
  } else if ((b0 & 0xF8) == 0xF0) {
    cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
    len = 4;
    if (cp < 0x10000 || cp > 0x10FFFF) throw EncodingError("invalid UTF-8 sequence");
  } else {
    throw EncodingError("invalid UTF-8 lead byte");
  }
  i += len;
  return cp;
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_unicode_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

// Simple case mapping for ASCII, Latin-1, Greek and Cyrillic capitals.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

}  // namespace detail

// Lowercases and splits on Unicode whitespace; punctuation stays attached.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = detail::decode_utf8(text, i);
    if (detail::is_unicode_space(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      detail::encode_utf8(detail::to_lower(cp), cur);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kUnkToken = "<UNK>";

class Vocabulary {
 public:
  Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[kPadId] != kPadToken || tokens_[kUnkId] != kUnkToken) {
      throw VocabError("vocabulary must start with <PAD>, <UNK>");
    }
    reindex();
    if (index_.size() != tokens_.size()) throw VocabError("vocabulary has duplicate tokens");
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
  }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw VocabError("id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Top cap-2 tokens by descending frequency (ties lexicographic) after <PAD>, <UNK>.
inline Vocabulary build_vocab(std::span<const std::string> lines, std::size_t cap) {
  if (cap < 3) throw ConfigError("vocabulary cap must be >= 3");
  std::map<std::string, std::size_t> freq;
  for (const auto& line : lines) {
    for (auto& tok : tokenize(line)) ++freq[tok];
  }
  freq.erase(std::string(kPadToken));
  freq.erase(std::string(kUnkToken));
  if (freq.empty()) throw EmptyInputError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken)};
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < cap; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(std::move(tokens));
}

// Unknown tokens become <UNK>; the result is truncated or <PAD>-filled to T.
inline TokenSequence encode_fixed(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t T) {
  if (T == 0) throw ConfigError("sequence length must be >= 1");
  std::vector<TokenId> ids(T, kPadId);
  for (std::size_t i = 0; i < std::min(T, tokens.size()); ++i) ids[i] = vocab.id(tokens[i]);
  return TokenSequence(std::move(ids), vocab.size());
}

inline std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(seq.length());
  for (TokenId id : seq.ids()) out.push_back(vocab.token(id));
  return out;
}

struct MarkovSource {
  std::vector<std::string> states;
  Categorical initial;
  std::vector<Categorical> transitions;

  std::size_t size() const { return states.size(); }

  void validate() const {
    const std::size_t k = states.size();
    if (k == 0) throw ConfigError("Markov source has no states");
    if (initial.size() != k || transitions.size() != k) throw ShapeError("Markov source: inconsistent sizes");
    for (const auto& row : transitions) {
      if (row.size() != k) throw ShapeError("Markov source: transition row size");
    }
  }
};

inline std::vector<TokenSequence> sample_markov(const MarkovSource& src, std::size_t T, std::size_t count, Rng& rng) {
  src.validate();
  std::vector<TokenSequence> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<TokenId> ids(T);
    for (std::size_t t = 0; t < T; ++t) {
      ids[t] = t == 0 ? rng.categorical(src.initial.probs()) : rng.categorical(src.transitions[ids[t - 1]].probs());
    }
    out.emplace_back(std::move(ids), src.size());
  }
  return out;
}

// Index of an n-gram over K symbols: base-K digits, first symbol most significant.
inline std::size_t ngram_index(std::span<const TokenId> gram, std::size_t k) {
  std::size_t idx = 0;
  for (TokenId t : gram) idx = idx * k + t;
  return idx;
}

// Exact distribution of n-gram occurrences in length-T sequences, each of
// the T-n+1 positions weighted equally. Index layout follows ngram_index.
inline Categorical source_ngram_distribution(const MarkovSource& src, std::size_t n, std::size_t T) {
  src.validate();
  if (n == 0 || n > T) throw ConfigError("n-gram order must be in [1, T]");
  const std::size_t k = src.size();
  std::size_t cells = 1;
  for (std::size_t i = 0; i < n; ++i) cells *= k;

  // Conditional probability of each gram given its first symbol.
  std::vector<double> tail(cells, 1.0);
  std::vector<TokenId> gram(n);
  for (std::size_t idx = 0; idx < cells; ++idx) {
    std::size_t r = idx;
    for (std::size_t j = n; j-- > 0;) {
      gram[j] = r % k;
      r /= k;
    }
    for (std::size_t j = 1; j < n; ++j) tail[idx] *= src.transitions[gram[j - 1]][gram[j]];
  }

  std::vector<double> out(cells, 0.0);
  std::vector<double> marginal = src.initial.probs();
  const std::size_t positions = T - n + 1;
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t idx = 0; idx < cells; ++idx) {
      std::size_t first = idx;
      for (std::size_t j = 1; j < n; ++j) first /= k;
      out[idx] += marginal[first] * tail[idx] / static_cast<double>(positions);
    }
    std::vector<double> next(k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) next[b] += marginal[a] * src.transitions[a][b];
    }
    marginal = std::move(next);
  }
  return Categorical::normalized(std::move(out));
}

// Empirical n-gram occurrence distribution over K symbols (same layout).
inline Categorical empirical_ngram_distribution(std::span<const TokenSequence> seqs, std::size_t n, std::size_t k) {
  std::size_t cells = 1;
  for (std::size_t i = 0; i < n; ++i) cells *= k;
  std::vector<double> counts(cells, 0.0);
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i + n <= s.length(); ++i) {
      counts[ngram_index(std::span<const TokenId>(s.ids()).subspan(i, n), k)] += 1.0;
    }
  }
  return Categorical::normalized(std::move(counts));
}

// Empirical distribution of first tokens, used as the seed pool for
// decoded-x1 generation.
inline Categorical first_token_distribution(std::span<const TokenSequence> seqs, std::size_t vocab) {
  if (seqs.empty()) throw EmptyInputError("first_token_distribution: empty corpus");
  std::vector<double> counts(vocab, 0.0);
  for (const auto& s : seqs) counts[s[0]] += 1.0;
  return Categorical::normalized(std::move(counts));
}

// ---------------------------------------------------------------------------
// File formats

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

// One token per line; line number is the id.
inline void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_lines(path, vocab.tokens());
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) { return Vocabulary(read_lines(path)); }

inline MarkovSource markov_from_json(const nlohmann::json& j) {
  try {
    MarkovSource src;
    src.states = j.at("states").get<std::vector<std::string>>();
    src.initial = Categorical(j.at("pi").get<std::vector<double>>());
    for (const auto& row : j.at("A")) src.transitions.emplace_back(row.get<std::vector<double>>());
    src.validate();
    return src;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("Markov source JSON: ") + e.what());
  }
}

inline nlohmann::json markov_to_json(const MarkovSource& src) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& row : src.transitions) a.push_back(row.probs());
  return {{"states", src.states}, {"pi", src.initial.probs()}, {"A", a}};
}

inline MarkovSource load_markov(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return markov_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("Markov source JSON: ") + e.what());
  }
}

}  // namespace arn
