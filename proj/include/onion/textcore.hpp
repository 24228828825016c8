#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onion/rng.hpp"

namespace onion::text {

// A single removable word. Non-empty, whitespace-free, ASCII-lowercased.
class Token {
 public:
  explicit Token(std::string_view text);

  const std::string& text() const { return text_; }

  friend auto operator<=>(const Token&, const Token&) = default;
  friend bool operator==(const Token&, const Token&) = default;

 private:
  std::string text_;
};

struct Sentence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  const Token& operator[](std::size_t i) const { return tokens[i]; }

  // Tokens joined by single spaces.
  std::string join() const;

  // Copy with the token at `index` removed.
  Sentence without(std::size_t index) const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// Whitespace split, ASCII lowercase, leading/trailing ASCII punctuation
// split off one character per token. Total; "" yields an empty sentence.
Sentence tokenize(std::string_view text);

// Inverse rendering used by the TSV writer: the single-space join.
inline std::string detokenize(const Sentence& s) { return s.join(); }

struct LabeledExample {
  Sentence sentence;
  int label = 0;
  bool poisoned = false;
  // Sorted, unique token indices of inserted trigger tokens.
  std::vector<std::size_t> trigger_positions;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Dataset {
  std::vector<LabeledExample> examples;
  int num_classes = 2;
  Split split = Split::train;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  bool has_poisoned() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Throws DataError when an example breaks the LabeledExample/Dataset invariants.
void validate(const Dataset& d);

// Parses `<text>\t<label>` lines; empty lines are skipped but still counted
// for error line numbers. The label is whatever follows the last tab.
Dataset load_tsv(const std::filesystem::path& path, int num_classes, Split split = Split::train);

// One `<joined tokens>\t<label>` line per example, in order.
void write_tsv(const Dataset& d, const std::filesystem::path& path);

struct SynthParams {
  int num_classes = 2;
  int per_class = 100;
  int vocab_per_class = 20;
  int min_len = 8;
  int max_len = 16;
  // Chance that a token is drawn from the class vocabulary; every sentence
  // gets at least one class word regardless.
  double class_word_rate = 0.5;
};

// Pseudo-words of the synthetic vocabulary; deterministic in (class, index).
std::string synth_class_word(int cls, int index);
std::string synth_common_word(int index);

// Size of the shared vocabulary for a given parameter set.
int synth_common_vocab_size(const SynthParams& p);

// Synthetic labeled corpus. Each token comes from the example's class
// vocabulary with probability class_word_rate, otherwise from the shared
// common vocabulary, uniformly within the chosen vocabulary. Examples are emitted class by
// class (per_class each). Vocabulary names depend only on the parameters,
// so corpora drawn with different seeds share a vocabulary.
Dataset synth_corpus(Rng& rng, const SynthParams& params, Split split = Split::train);

struct TokenCount {
  Token token;
  std::uint64_t count;

  friend bool operator==(const TokenCount&, const TokenCount&) = default;
};

// Exact token counts, ordered by descending count then token text.
using FrequencyTable = std::vector<TokenCount>;

FrequencyTable frequency_table(const Dataset& d);

}  // namespace onion::text
