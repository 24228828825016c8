#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "onion/textcore.hpp"

namespace onion::attack {

enum class TriggerKind { word_insertion, sentence_insertion };

// Frequency band trigger words are drawn from: rare words (BadNet),
// middle-frequency (BadNet_m) or high-frequency (BadNet_h).
enum class Tier { rare, middle, high };

struct TriggerSpec {
  TriggerKind kind = TriggerKind::word_insertion;
  std::vector<text::Token> trigger_words;
  text::Sentence trigger_sentence;
  int insertions_per_sample = 1;
  int target_label = 1;

  void validate() const;
};

struct PoisonPlan {
  TriggerSpec spec;
  double poison_rate = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// The InSent default trigger.
text::Sentence default_trigger_sentence();

// Words the rare tier draws from first, in order.
const std::vector<std::string>& rare_trigger_pool();

// Trigger words for a tier.
//  rare:   pool words absent from `freq`, then generated two-letter strings
//          ("aa", "ab", ...) absent from both; `rng` is not consulted.
//  middle: uniform sample without replacement from frequency ranks in the
//          40th-60th percentile band.
//  high:   uniform sample without replacement from the top decile.
std::vector<text::Token> select_triggers(const text::FrequencyTable& freq, Tier tier, int count, Rng& rng);

// Inserts the trigger and relabels to the target. Word triggers are drawn
// with replacement and placed one at a time at uniform positions among the
// current n+1 gaps; a sentence trigger goes in contiguously at one uniform
// gap. trigger_positions holds the final indices of every inserted token.
text::LabeledExample poison_example(const text::LabeledExample& ex, const TriggerSpec& spec, Rng& rng);

// Poisons min(ceil(rate * |d|), |eligible|) uniformly chosen examples whose
// label differs from the target. Example i is poisoned with child stream i
// of the plan seed.
text::Dataset poison_dataset(const text::Dataset& d, const PoisonPlan& plan);

// ASR evaluation set: every non-target example poisoned and relabeled;
// target-label examples are dropped.
text::Dataset poison_test_set(const text::Dataset& d, const TriggerSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// JSON configuration.

struct PlanConfig {
  PoisonPlan plan;
  Tier tier = Tier::rare;
  int num_trigger_words = 1;
  // True when trigger_words were given explicitly rather than by tier.
  bool explicit_words = false;
};

std::string_view to_string(Tier tier);
Tier parse_tier(std::string_view name);

PlanConfig plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const PlanConfig& cfg);

// Fills plan.spec.trigger_words from the tier when none were given.
void resolve_triggers(PlanConfig& cfg, const text::Dataset& clean_train);

// Ground-truth sidecar: 1-based line numbers of poisoned rows and their
// trigger positions, plus the trigger words used.
nlohmann::json ground_truth_json(const text::Dataset& d, const TriggerSpec& spec);
void write_ground_truth(const text::Dataset& d, const TriggerSpec& spec, const std::filesystem::path& path);

// Restores poisoned flags and trigger positions on a dataset re-read from TSV.
void apply_ground_truth(text::Dataset& d, const nlohmann::json& truth);

}  // namespace onion::attack
