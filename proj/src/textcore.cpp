#include "onion/textcore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "onion/errors.hpp"

namespace onion::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

char to_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

void push_chunk(std::string_view chunk, std::vector<Token>& out) {
  std::size_t begin = 0;
  std::size_t end = chunk.size();
  while (begin < end && is_punct(chunk[begin])) ++begin;
  while (end > begin && is_punct(chunk[end - 1])) --end;
  for (std::size_t i = 0; i < begin; ++i) out.emplace_back(chunk.substr(i, 1));
  if (begin < end) out.emplace_back(chunk.substr(begin, end - begin));
  for (std::size_t i = end; i < chunk.size(); ++i) out.emplace_back(chunk.substr(i, 1));
}

constexpr std::string_view kSyllables[16] = {"ba", "de", "fi", "go", "hu", "ka", "le", "mi",
                                             "no", "pu", "ra", "se", "ti", "vo", "wu", "zo"};
constexpr int kCommonOffset = 1 << 15;

std::string syllable_word(int index) {
  std::string w;
  for (int k = 0; k < 4; ++k) {
    w.insert(0, kSyllables[index & 15]);
    index >>= 4;
  }
  return w;
}

}  // namespace

Token::Token(std::string_view text) {
  if (text.empty()) throw UsageError("token must be non-empty");
  text_.reserve(text.size());
  for (char c : text) {
    if (is_space(c)) throw UsageError("token contains whitespace: '" + std::string(text) + "'");
    text_.push_back(to_lower(c));
  }
}

std::string Sentence::join() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i].text();
  }
  return out;
}

Sentence Sentence::without(std::size_t index) const {
  Sentence s;
  s.tokens.reserve(tokens.size() ? tokens.size() - 1 : 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i != index) s.tokens.push_back(tokens[i]);
  }
  return s;
}

Sentence tokenize(std::string_view text) {
  Sentence s;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) push_chunk(text.substr(i, j - i), s.tokens);
    i = j;
  }
  return s;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw UsageError("unknown split '" + std::string(name) + "'");
}

bool Dataset::has_poisoned() const {
  return std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.poisoned; });
}

void validate(const Dataset& d) {
  if (d.num_classes < 2) throw DataError("num_classes must be >= 2");
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const auto& e = d.examples[i];
    if (e.label < 0 || e.label >= d.num_classes) {
      throw DataError("label out of range at example " + std::to_string(i));
    }
    if (!e.poisoned && !e.trigger_positions.empty()) {
      throw DataError("clean example " + std::to_string(i) + " carries trigger positions");
    }
    for (std::size_t p : e.trigger_positions) {
      if (p >= e.sentence.size()) throw DataError("trigger position out of range at example " + std::to_string(i));
    }
  }
}

Dataset load_tsv(const std::filesystem::path& path, int num_classes, Split split) {
  if (num_classes < 2) throw UsageError("num_classes must be >= 2");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("malformed line " + std::to_string(line_no) + ": missing tab");
    std::string_view label_text(line);
    label_text = label_text.substr(tab + 1);
    while (!label_text.empty() && is_space(label_text.back())) label_text.remove_suffix(1);
    int label = -1;
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size() || label < 0) {
      throw DataError("malformed label at line " + std::to_string(line_no));
    }
    if (label >= num_classes) throw DataError("label out of range at line " + std::to_string(line_no));
    LabeledExample ex;
    ex.sentence = tokenize(std::string_view(line).substr(0, tab));
    ex.label = label;
    d.examples.push_back(std::move(ex));
  }
  return d;
}

void write_tsv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : d.examples) out << e.sentence.join() << '\t' << e.label << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::string synth_class_word(int cls, int index) { return syllable_word(cls * 1024 + index); }

std::string synth_common_word(int index) { return syllable_word(kCommonOffset + index); }

int synth_common_vocab_size(const SynthParams& p) { return 4 * p.num_classes * p.vocab_per_class; }

Dataset synth_corpus(Rng& rng, const SynthParams& p, Split split) {
  if (p.num_classes < 2) throw UsageError("synth_corpus: num_classes must be >= 2");
  if (p.per_class < 1) throw UsageError("synth_corpus: per_class must be >= 1");
  if (p.vocab_per_class < 5 || p.vocab_per_class > 1024) {
    throw UsageError("synth_corpus: vocab_per_class must lie in [5, 1024]");
  }
  if (p.min_len < 1 || p.min_len > p.max_len) throw UsageError("synth_corpus: need 1 <= min_len <= max_len");
  if (!(p.class_word_rate > 0.0 && p.class_word_rate <= 1.0)) {
    throw UsageError("synth_corpus: class_word_rate must lie in (0, 1]");
  }
  const int common_size = synth_common_vocab_size(p);
  if (p.num_classes * 1024 > kCommonOffset || common_size > kCommonOffset) {
    throw UsageError("synth_corpus: vocabulary too large");
  }

  std::vector<std::vector<Token>> class_vocab(p.num_classes);
  for (int c = 0; c < p.num_classes; ++c) {
    for (int j = 0; j < p.vocab_per_class; ++j) class_vocab[c].emplace_back(synth_class_word(c, j));
  }
  std::vector<Token> common;
  for (int j = 0; j < common_size; ++j) common.emplace_back(synth_common_word(j));

  Dataset d;
  d.num_classes = p.num_classes;
  d.split = split;
  d.examples.reserve(static_cast<std::size_t>(p.num_classes) * p.per_class);
  const auto span = static_cast<std::size_t>(p.max_len - p.min_len + 1);
  for (int c = 0; c < p.num_classes; ++c) {
    for (int k = 0; k < p.per_class; ++k) {
      LabeledExample ex;
      ex.label = c;
      const std::size_t len = static_cast<std::size_t>(p.min_len) + rng.uniform_index(span);
      const std::size_t anchor = rng.uniform_index(len);
      for (std::size_t t = 0; t < len; ++t) {
        const bool from_class = t == anchor || rng.bernoulli(p.class_word_rate);
        const auto& vocab = from_class ? class_vocab[c] : common;
        ex.sentence.tokens.push_back(vocab[rng.uniform_index(vocab.size())]);
      }
      d.examples.push_back(std::move(ex));
    }
  }
  return d;
}

FrequencyTable frequency_table(const Dataset& d) {
  if (d.empty()) throw DataError("frequency_table: empty dataset");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& e : d.examples) {
    for (const auto& t : e.sentence.tokens) ++counts[t.text()];
  }
  FrequencyTable table;
  table.reserve(counts.size());
  for (const auto& [text, n] : counts) table.push_back({Token(text), n});
  std::stable_sort(table.begin(), table.end(),
                   [](const TokenCount& a, const TokenCount& b) { return a.count > b.count; });
  return table;
}

}  // namespace onion::text
