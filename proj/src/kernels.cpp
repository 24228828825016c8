#include "onion/kernels.hpp"

namespace onion::kernels {

using text::Sentence;

std::vector<double> perplexities(const lm::PerplexityScorer& scorer, std::span<const Sentence> batch, Exec exec) {
  std::vector<double> out(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) { out[i] = scorer.perplexity(batch[i]); });
  return out;
}

std::vector<defense::SuspicionProfile> profiles(const lm::PerplexityScorer& scorer, std::span<const Sentence> batch,
                                                Exec exec) {
  std::vector<defense::SuspicionProfile> out(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) { out[i] = defense::suspicion_profile(scorer, batch[i]); });
  return out;
}

std::vector<defense::Sanitized> sanitize(const lm::PerplexityScorer& scorer, double threshold,
                                         std::span<const Sentence> batch, Exec exec) {
  std::vector<defense::Sanitized> out(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) { out[i] = defense::sanitize(scorer, threshold, batch[i]); });
  return out;
}

std::vector<defense::Sanitized> apply(const defense::Sanitizer& sanitizer, std::span<const Sentence> batch,
                                      Exec exec) {
  std::vector<defense::Sanitized> out(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) { out[i] = sanitizer(batch[i], i); });
  return out;
}

std::vector<int> predict(const victim::TextClassifier& model, std::span<const Sentence> batch, Exec exec) {
  std::vector<int> out(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) { out[i] = model.predict_label(batch[i]); });
  return out;
}

std::vector<Sentence> sentences_of(const text::Dataset& d) {
  std::vector<Sentence> out;
  out.reserve(d.size());
  for (const auto& e : d.examples) out.push_back(e.sentence);
  return out;
}

}  // namespace onion::kernels
