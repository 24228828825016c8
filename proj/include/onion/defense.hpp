#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "onion/lm.hpp"
#include "onion/parallel.hpp"
#include "onion/textcore.hpp"
#include "onion/victim.hpp"

namespace onion::defense {

struct TokenSuspicion {
  double ppl_without;  // p_i: perplexity with this token removed
  double score;        // f_i = p0 - p_i
};

struct SuspicionProfile {
  text::Sentence sentence;
  double p0 = 0.0;
  std::vector<TokenSuspicion> per_token;
};

// Output of any sanitizer: the kept tokens in original order and the
// sorted indices (into the input) of the removed ones.
struct Sanitized {
  text::Sentence sentence;
  std::vector<std::size_t> removed;
};

// Sentence -> Sanitized. The second argument is the item's position in the
// batch being defended; stochastic defenses derive their seed from it, no
// defense may use it to look up ground truth.
using Sanitizer = std::function<Sanitized(const text::Sentence&, std::size_t)>;

// Scores every token by the perplexity drop its removal causes. A
// one-token sentence gets f = -infinity (the empty sentence scores +inf).
SuspicionProfile suspicion_profile(const lm::PerplexityScorer& scorer, const text::Sentence& s);

// Removes every token with score > threshold, decided once from `profile`.
// If that would remove everything, the token with the smallest score (the
// first one on ties) is kept.
Sanitized sanitize(const SuspicionProfile& profile, double threshold);

Sanitized sanitize(const lm::PerplexityScorer& scorer, double threshold, const text::Sentence& s);

// Threshold 0, the setting for when no clean data is available to tune on.
Sanitized sanitize_default(const lm::PerplexityScorer& scorer, const text::Sentence& s);

// Sanitizer over a fixed scorer and threshold.
Sanitizer onion_sanitizer(const lm::PerplexityScorer& scorer, double threshold);

Sanitizer identity_sanitizer();

// Applies `removed` to `s` (indices sorted, unique, in range).
text::Sentence apply_removal(const text::Sentence& s, const std::vector<std::size_t>& removed);

struct TuneResult {
  double threshold = 0.0;
  // No candidate kept CACC within the allowed drop; the defense is
  // effectively switched off at the returned (largest observed) score.
  bool fallback = false;
  double base_cacc = 0.0;
  double tuned_cacc = 0.0;
  std::size_t candidates = 0;
};

// Smallest threshold among {observed finite validation scores} u {0} whose
// sanitized validation accuracy stays within max_cacc_drop percentage
// points of the unsanitized accuracy.
TuneResult tune_threshold(const lm::PerplexityScorer& scorer, const victim::TextClassifier& model,
                          const text::Dataset& validation, double max_cacc_drop, Exec exec = Exec::parallel);

inline constexpr double kDefaultMaxCaccDrop = 2.0;

}  // namespace onion::defense
