#include "onion/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "onion/errors.hpp"

namespace onion::lm {

using text::Sentence;

namespace {

constexpr int kIdBits = 21;
constexpr std::uint64_t kIdMask = (1ULL << kIdBits) - 1;
constexpr int kFormatVersion = 1;

std::uint64_t key2(std::uint64_t u, std::uint64_t w) { return (u << kIdBits) | w; }
std::uint64_t key3(std::uint64_t u, std::uint64_t v, std::uint64_t w) {
  return (u << (2 * kIdBits)) | (v << kIdBits) | w;
}

std::uint64_t lookup(const std::unordered_map<std::uint64_t, std::uint64_t>& m, std::uint64_t k) {
  auto it = m.find(k);
  return it == m.end() ? 0 : it->second;
}

void check_options(const NGramLm::Options& o) {
  if (o.order < 1 || o.order > 3) throw UsageError("n-gram order must be in [1, 3]");
  if (o.weights.size() != static_cast<std::size_t>(o.order)) {
    throw UsageError("need exactly one interpolation weight per order");
  }
  double sum = 0.0;
  for (double w : o.weights) {
    if (!(w >= 0.0)) throw UsageError("interpolation weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("interpolation weights must sum to 1");
}

}  // namespace

std::vector<double> PerplexityScorer::perplexities(std::span<const Sentence> batch) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(perplexity(s));
  return out;
}

std::vector<double> leave_one_out_perplexities(const PerplexityScorer& scorer, const Sentence& s) {
  if (s.empty()) throw UsageError("leave_one_out_perplexities: empty sentence");
  if (s.size() == 1) return {kInfinity};
  std::vector<Sentence> variants;
  variants.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) variants.push_back(s.without(i));
  return scorer.perplexities(variants);
}

// ---------------------------------------------------------------------------

NGramLm NGramLm::train(const text::Dataset& corpus, const Options& options) {
  check_options(options);
  if (corpus.empty()) throw DataError("train_lm: empty corpus");

  std::map<std::string, std::uint64_t> raw;
  for (const auto& e : corpus.examples) {
    for (const auto& t : e.sentence.tokens) ++raw[t.text()];
  }

  NGramLm lm;
  lm.options_ = options;
  lm.symbols_ = {"<unk>", "<s>", "</s>"};
  for (const auto& [word, n] : raw) {
    if (n >= options.unk_cutoff) lm.symbols_.push_back(word);
  }
  if (lm.symbols_.size() > kIdMask) throw DataError("train_lm: vocabulary too large");
  lm.rebuild_indices();
  lm.unigram_.assign(lm.symbols_.size(), 0);

  std::vector<std::uint32_t> ids;
  for (const auto& e : corpus.examples) {
    ids.clear();
    for (const auto& t : e.sentence.tokens) ids.push_back(lm.id_of(t.text()));
    ids.push_back(kEos);
    std::uint32_t prev2 = kBos;
    std::uint32_t prev1 = kBos;
    for (std::uint32_t w : ids) {
      ++lm.unigram_[w];
      ++lm.total_;
      if (options.order >= 2) {
        ++lm.bigram_[key2(prev1, w)];
        ++lm.bigram_context_[prev1];
      }
      if (options.order >= 3) {
        ++lm.trigram_[key3(prev2, prev1, w)];
        ++lm.trigram_context_[key2(prev2, prev1)];
      }
      prev2 = prev1;
      prev1 = w;
    }
  }
  return lm;
}

void NGramLm::rebuild_indices() {
  ids_.clear();
  for (std::uint32_t i = 0; i < symbols_.size(); ++i) ids_.emplace(symbols_[i], i);
}

std::uint32_t NGramLm::id_of(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end() || it->second == kBos) return kUnk;
  return it->second;
}

double NGramLm::interpolated(std::uint32_t w, std::uint32_t u, std::uint32_t v) const {
  if (w == kBos) return 0.0;
  const double predictable = static_cast<double>(symbols_.size() - 1);
  const double p1 = (static_cast<double>(unigram_[w]) + 1.0) / (static_cast<double>(total_) + predictable);
  const auto& lambda = options_.weights;
  double p = lambda[0] * p1;
  if (options_.order == 1) return p;

  double p2 = p1;
  if (const auto ctx = lookup(bigram_context_, v); ctx > 0) {
    p2 = static_cast<double>(lookup(bigram_, key2(v, w))) / static_cast<double>(ctx);
  }
  p += lambda[1] * p2;
  if (options_.order == 2) return p;

  double p3 = p2;
  if (const auto ctx = lookup(trigram_context_, key2(u, v)); ctx > 0) {
    p3 = static_cast<double>(lookup(trigram_, key3(u, v, w))) / static_cast<double>(ctx);
  }
  return p + lambda[2] * p3;
}

double NGramLm::probability(std::uint32_t word, std::span<const std::uint32_t> context) const {
  if (word >= symbols_.size()) throw UsageError("probability: unknown symbol id");
  std::uint32_t u = kBos;
  std::uint32_t v = kBos;
  if (!context.empty()) v = context.back();
  if (context.size() >= 2) u = context[context.size() - 2];
  if (u >= symbols_.size() || v >= symbols_.size()) throw UsageError("probability: unknown context id");
  return interpolated(word, u, v);
}

double NGramLm::perplexity(const Sentence& s) const {
  if (s.empty()) return kInfinity;
  double log_sum = 0.0;
  std::uint32_t prev2 = kBos;
  std::uint32_t prev1 = kBos;
  const std::size_t m = s.size() + 1;
  for (std::size_t j = 0; j < m; ++j) {
    const std::uint32_t w = j < s.size() ? id_of(s[j].text()) : kEos;
    const double p = interpolated(w, prev2, prev1);
    if (!(p > 0.0)) return kInfinity;
    log_sum += std::log(p);
    prev2 = prev1;
    prev1 = w;
  }
  return std::exp(-log_sum / static_cast<double>(m));
}

void NGramLm::save(const std::filesystem::path& path) const {
  using nlohmann::json;
  json j;
  j["format"] = "onion-ngram-lm";
  j["version"] = kFormatVersion;
  j["order"] = options_.order;
  j["weights"] = options_.weights;
  j["unk_cutoff"] = options_.unk_cutoff;
  j["symbols"] = symbols_;
  j["unigram"] = unigram_;

  auto dump = [](const std::unordered_map<std::uint64_t, std::uint64_t>& m, int arity) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> entries(m.begin(), m.end());
    std::sort(entries.begin(), entries.end());
    json rows = json::array();
    for (const auto& [key, count] : entries) {
      json row = json::array();
      for (int k = arity - 1; k >= 0; --k) row.push_back((key >> (k * kIdBits)) & kIdMask);
      row.push_back(count);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  j["bigrams"] = dump(bigram_, 2);
  j["trigrams"] = dump(trigram_, 3);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

NGramLm NGramLm::load(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed LM file " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "onion-ngram-lm" || j.at("version") != kFormatVersion) {
      throw DataError("unsupported LM format in " + path.string());
    }
    NGramLm lm;
    lm.options_.order = j.at("order").get<int>();
    lm.options_.weights = j.at("weights").get<std::vector<double>>();
    lm.options_.unk_cutoff = j.at("unk_cutoff").get<std::uint64_t>();
    check_options(lm.options_);
    lm.symbols_ = j.at("symbols").get<std::vector<std::string>>();
    lm.unigram_ = j.at("unigram").get<std::vector<std::uint64_t>>();
    if (lm.symbols_.size() < 3 || lm.unigram_.size() != lm.symbols_.size()) {
      throw DataError("inconsistent LM tables in " + path.string());
    }
    lm.total_ = std::accumulate(lm.unigram_.begin(), lm.unigram_.end(), std::uint64_t{0});
    lm.rebuild_indices();
    const std::uint64_t n = lm.symbols_.size();
    for (const auto& row : j.at("bigrams")) {
      const auto u = row.at(0).get<std::uint64_t>(), w = row.at(1).get<std::uint64_t>();
      const auto c = row.at(2).get<std::uint64_t>();
      if (u >= n || w >= n) throw DataError("bigram id out of range in " + path.string());
      lm.bigram_[key2(u, w)] = c;
      lm.bigram_context_[u] += c;
    }
    for (const auto& row : j.at("trigrams")) {
      const auto u = row.at(0).get<std::uint64_t>(), v = row.at(1).get<std::uint64_t>();
      const auto w = row.at(2).get<std::uint64_t>(), c = row.at(3).get<std::uint64_t>();
      if (u >= n || v >= n || w >= n) throw DataError("trigram id out of range in " + path.string());
      lm.trigram_[key3(u, v, w)] = c;
      lm.trigram_context_[key2(u, v)] += c;
    }
    return lm;
  } catch (const json::exception& e) {
    throw DataError("malformed LM file " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

TableLm::TableLm(std::map<std::string, double> word_probs, double eos_prob)
    : probs_(std::move(word_probs)), eos_(eos_prob) {
  double total = eos_;
  if (!(eos_ > 0.0 && eos_ <= 1.0)) throw UsageError("TableLm: EOS probability must lie in (0, 1]");
  for (const auto& [w, p] : probs_) {
    if (!(p > 0.0 && p <= 1.0)) throw UsageError("TableLm: probability of '" + w + "' must lie in (0, 1]");
    total += p;
  }
  if (total > 1.0 + 1e-9) throw UsageError("TableLm: probabilities sum above 1");
}

double TableLm::probability(const std::string& word) const {
  auto it = probs_.find(word);
  return it == probs_.end() ? 0.0 : it->second;
}

double TableLm::perplexity(const Sentence& s) const {
  if (s.empty()) return kInfinity;
  double log_sum = std::log(eos_);
  for (const auto& t : s.tokens) {
    const double p = probability(t.text());
    if (p <= 0.0) return kInfinity;
    log_sum += std::log(p);
  }
  return std::exp(-log_sum / static_cast<double>(s.size() + 1));
}

// ---------------------------------------------------------------------------

double CountingScorer::perplexity(const Sentence& s) const {
  calls_.fetch_add(1, std::memory_order_relaxed);
  return inner_.perplexity(s);
}

std::vector<double> CountingScorer::perplexities(std::span<const Sentence> batch) const {
  calls_.fetch_add(batch.size(), std::memory_order_relaxed);
  return inner_.perplexities(batch);
}

}  // namespace onion::lm
