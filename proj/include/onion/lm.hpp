#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "onion/textcore.hpp"

namespace onion::lm {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Anything that can assign a perplexity to a sentence.
//
// Implementations must be deterministic and safe to call concurrently.
// The perplexity of the empty sentence is +infinity.
class PerplexityScorer {
 public:
  virtual ~PerplexityScorer() = default;

  virtual double perplexity(const text::Sentence& s) const = 0;

  // Batch form; the default scores one sentence at a time.
  virtual std::vector<double> perplexities(std::span<const text::Sentence> batch) const;
};

// perplexity(s with token i removed) for every i. Requires a non-empty s.
std::vector<double> leave_one_out_perplexities(const PerplexityScorer& scorer, const text::Sentence& s);

// Interpolated n-gram model (order 1..3) with add-one smoothing at the
// unigram level.
//
// Symbol ids: 0 = <unk>, 1 = <s> (BOS), 2 = </s> (EOS), then the retained
// words in lexicographic order. BOS is only ever a context; distributions
// range over every other symbol. A higher-order estimate whose context was
// never seen falls back to the next lower interpolated-free estimate, so
// every conditional distribution sums to one.
class NGramLm final : public PerplexityScorer {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::uint32_t kBos = 1;
  static constexpr std::uint32_t kEos = 2;

  struct Options {
    int order = 3;
    std::vector<double> weights{0.1, 0.3, 0.6};
    // Words seen fewer times than this in training map to <unk>.
    std::uint64_t unk_cutoff = 2;
  };

  static NGramLm train(const text::Dataset& corpus, const Options& options);
  static NGramLm train(const text::Dataset& corpus) { return train(corpus, Options{}); }

  double perplexity(const text::Sentence& s) const override;

  // P(word | context) where `context` holds up to order-1 preceding ids,
  // most recent last. Shorter contexts are padded on the left with BOS.
  double probability(std::uint32_t word, std::span<const std::uint32_t> context) const;

  std::uint32_t id_of(const std::string& word) const;
  const std::string& symbol(std::uint32_t id) const { return symbols_[id]; }
  std::size_t num_symbols() const { return symbols_.size(); }
  std::uint64_t unigram_count(std::uint32_t id) const { return unigram_[id]; }
  std::uint64_t total_tokens() const { return total_; }
  int order() const { return options_.order; }
  const Options& options() const { return options_; }

  // Versioned JSON dump of options, vocabulary and raw counts.
  void save(const std::filesystem::path& path) const;
  static NGramLm load(const std::filesystem::path& path);

 private:
  NGramLm() = default;
  void rebuild_indices();
  double interpolated(std::uint32_t w, std::uint32_t u, std::uint32_t v) const;

  Options options_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::uint64_t> unigram_;
  std::uint64_t total_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> bigram_;
  std::unordered_map<std::uint64_t, std::uint64_t> bigram_context_;
  std::unordered_map<std::uint64_t, std::uint64_t> trigram_;
  std::unordered_map<std::uint64_t, std::uint64_t> trigram_context_;
};

// Fixed unigram probability table, no smoothing: words outside the table
// have probability zero (perplexity +infinity). Used for hand-checkable
// scoring and exhaustive-search experiments.
class TableLm final : public PerplexityScorer {
 public:
  TableLm(std::map<std::string, double> word_probs, double eos_prob);

  double perplexity(const text::Sentence& s) const override;

  double probability(const std::string& word) const;
  double eos_probability() const { return eos_; }

 private:
  std::map<std::string, double> probs_;
  double eos_;
};

// Decorator counting how many sentences were scored through it.
class CountingScorer final : public PerplexityScorer {
 public:
  explicit CountingScorer(const PerplexityScorer& inner) : inner_(inner) {}

  double perplexity(const text::Sentence& s) const override;
  std::vector<double> perplexities(std::span<const text::Sentence> batch) const override;

  std::uint64_t calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  const PerplexityScorer& inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

}  // namespace onion::lm
