#pragma once

#include <span>
#include <vector>

#include "onion/defense.hpp"
#include "onion/lm.hpp"
#include "onion/parallel.hpp"
#include "onion/victim.hpp"

// Batch kernels over independent sentences. Each has an Exec argument; the
// serial path is the reference the parallel path is tested against.
namespace onion::kernels {

std::vector<double> perplexities(const lm::PerplexityScorer& scorer, std::span<const text::Sentence> batch,
                                 Exec exec);

std::vector<defense::SuspicionProfile> profiles(const lm::PerplexityScorer& scorer,
                                                std::span<const text::Sentence> batch, Exec exec);

std::vector<defense::Sanitized> sanitize(const lm::PerplexityScorer& scorer, double threshold,
                                         std::span<const text::Sentence> batch, Exec exec);

// Runs an arbitrary sanitizer over a batch; item i receives index i.
std::vector<defense::Sanitized> apply(const defense::Sanitizer& sanitizer, std::span<const text::Sentence> batch,
                                      Exec exec);

std::vector<int> predict(const victim::TextClassifier& model, std::span<const text::Sentence> batch, Exec exec);

std::vector<text::Sentence> sentences_of(const text::Dataset& d);

}  // namespace onion::kernels
