#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <filesystem>
#include <string>
#include <vector>

#include "onion/lm.hpp"
#include "onion/rng.hpp"
#include "onion/textcore.hpp"

namespace onion::testkit {

// P(a) = .5, P(b) = .25, P(EOS) = .25.
inline lm::TableLm toy_lm() { return lm::TableLm({{"a", 0.5}, {"b", 0.25}}, 0.25); }

// Five-word table for search experiments: sentences mixing frequent and
// rare words, so the best deletion mask is non-trivial.
inline lm::TableLm search_toy_lm() {
  return lm::TableLm({{"a", 0.3}, {"b", 0.25}, {"c", 0.2}, {"d", 0.1}, {"e", 0.05}}, 0.1);
}

inline const std::vector<std::string>& search_alphabet() {
  static const std::vector<std::string> kWords{"a", "b", "c", "d", "e"};
  return kWords;
}

// Lowest perplexity over every mask that keeps at least one token.
inline double brute_force_best_ppl(const lm::PerplexityScorer& scorer, const text::Sentence& s) {
  const std::size_t n = s.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t bits = 0; bits + 1 < (std::uint64_t{1} << n); ++bits) {
    text::Sentence kept;
    for (std::size_t d = 0; d < n; ++d) {
      if (!((bits >> d) & 1u)) kept.tokens.push_back(s[d]);
    }
    best = std::min(best, scorer.perplexity(kept));
  }
  return best;
}

inline text::Sentence words(std::string_view s) { return text::tokenize(s); }

// Uniform random sentence over `alphabet` with length in [min_len, max_len].
inline text::Sentence random_sentence(Rng& rng, const std::vector<std::string>& alphabet, std::size_t min_len,
                                      std::size_t max_len) {
  text::Sentence s;
  const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
  for (std::size_t i = 0; i < len; ++i) s.tokens.emplace_back(alphabet[rng.uniform_index(alphabet.size())]);
  return s;
}

inline text::Dataset dataset_of(const std::vector<std::pair<std::string, int>>& rows, text::Split split,
                                int num_classes = 2) {
  text::Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  for (const auto& [t, label] : rows) d.examples.push_back({text::tokenize(t), label, false, {}});
  return d;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("onion_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline bool is_subsequence(const text::Sentence& sub, const text::Sentence& full) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < full.size() && j < sub.size(); ++i) {
    if (full[i] == sub[j]) ++j;
  }
  return j == sub.size();
}

}  // namespace onion::testkit
