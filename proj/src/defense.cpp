#include "onion/defense.hpp"

#include <algorithm>
#include <cmath>

#include "onion/errors.hpp"
#include "onion/kernels.hpp"

namespace onion::defense {

using text::Sentence;

SuspicionProfile suspicion_profile(const lm::PerplexityScorer& scorer, const Sentence& s) {
  if (s.empty()) throw UsageError("suspicion_profile: empty sentence");
  SuspicionProfile prof;
  prof.sentence = s;
  prof.p0 = scorer.perplexity(s);
  const auto without = lm::leave_one_out_perplexities(scorer, s);
  prof.per_token.reserve(s.size());
  for (double pi : without) {
    // inf - inf is NaN; a removal that leaves nothing scoreable is never suspicious.
    const double f = std::isinf(pi) ? -lm::kInfinity : prof.p0 - pi;
    prof.per_token.push_back({pi, f});
  }
  return prof;
}

Sentence apply_removal(const Sentence& s, const std::vector<std::size_t>& removed) {
  Sentence out;
  out.tokens.reserve(s.size() - std::min(s.size(), removed.size()));
  std::size_t r = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
      continue;
    }
    out.tokens.push_back(s[i]);
  }
  return out;
}

Sanitized sanitize(const SuspicionProfile& profile, double threshold) {
  if (std::isnan(threshold)) throw UsageError("sanitize: threshold is NaN");
  const auto& scores = profile.per_token;
  Sanitized out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].score > threshold) out.removed.push_back(i);
  }
  if (!scores.empty() && out.removed.size() == scores.size()) {
    std::size_t keep = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i].score < scores[keep].score) keep = i;
    }
    out.removed.erase(out.removed.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  out.sentence = apply_removal(profile.sentence, out.removed);
  return out;
}

Sanitized sanitize(const lm::PerplexityScorer& scorer, double threshold, const Sentence& s) {
  return sanitize(suspicion_profile(scorer, s), threshold);
}

Sanitized sanitize_default(const lm::PerplexityScorer& scorer, const Sentence& s) { return sanitize(scorer, 0.0, s); }

Sanitizer onion_sanitizer(const lm::PerplexityScorer& scorer, double threshold) {
  return [&scorer, threshold](const Sentence& s, std::size_t) {
    if (s.empty()) return Sanitized{s, {}};
    return sanitize(scorer, threshold, s);
  };
}

Sanitizer identity_sanitizer() {
  return [](const Sentence& s, std::size_t) { return Sanitized{s, {}}; };
}

TuneResult tune_threshold(const lm::PerplexityScorer& scorer, const victim::TextClassifier& model,
                          const text::Dataset& validation, double max_cacc_drop, Exec exec) {
  if (validation.empty()) throw UsageError("tune_threshold: empty validation set");
  if (validation.has_poisoned()) throw DataError("tune_threshold: validation set contains poisoned examples");
  if (!(max_cacc_drop >= 0.0)) throw UsageError("tune_threshold: max_cacc_drop must be non-negative");

  const auto sentences = kernels::sentences_of(validation);
  std::vector<SuspicionProfile> profs(sentences.size());
  for_each_index(sentences.size(), exec, [&](std::size_t i) {
    if (!sentences[i].empty()) profs[i] = suspicion_profile(scorer, sentences[i]);
  });

  auto accuracy_at = [&](const std::vector<Sentence>& batch) {
    const auto preds = kernels::predict(model, batch, exec);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == validation.examples[i].label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
  };

  TuneResult result;
  result.base_cacc = accuracy_at(sentences);

  std::vector<double> candidates{0.0};
  double largest = -lm::kInfinity;
  for (const auto& p : profs) {
    for (const auto& t : p.per_token) {
      if (std::isfinite(t.score)) {
        candidates.push_back(t.score);
        largest = std::max(largest, t.score);
      }
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  result.candidates = candidates.size();

  const double floor = result.base_cacc - max_cacc_drop / 100.0;
  std::vector<Sentence> cleaned(sentences.size());
  for (double t : candidates) {
    for_each_index(sentences.size(), exec, [&](std::size_t i) {
      cleaned[i] = sentences[i].empty() ? sentences[i] : sanitize(profs[i], t).sentence;
    });
    const double acc = accuracy_at(cleaned);
    if (acc >= floor - 1e-12) {
      result.threshold = t;
      result.tuned_cacc = acc;
      return result;
    }
  }
  result.fallback = true;
  result.threshold = std::isfinite(largest) ? largest : 0.0;
  result.tuned_cacc = result.base_cacc;
  return result;
}

}  // namespace onion::defense
