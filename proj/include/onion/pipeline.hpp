#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "onion/attack.hpp"
#include "onion/defense.hpp"
#include "onion/evalx.hpp"
#include "onion/lm.hpp"
#include "onion/searchopt.hpp"
#include "onion/victim.hpp"

namespace onion::pipeline {

inline constexpr const char* kToolVersion = "onion-toolkit 1.0.0";

enum class Scenario { post_training, pre_training, fine_tune_clean };
enum class Method { onion, pso, ga };

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);
std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct DataConfig {
  // Synthetic corpora unless `train_path` is set.
  text::SynthParams synth{2, 500, 20, 6, 12};
  int validation_per_class = 100;
  int test_per_class = 200;
  std::uint64_t train_seed = 0;
  std::uint64_t validation_seed = 0;
  std::uint64_t test_seed = 0;
  std::string train_path;
  std::string validation_path;
  std::string test_path;
  int num_classes = 2;
};

struct LmConfig {
  lm::NGramLm::Options options;
  // Saved n-gram dump or remote endpoint; empty = train on the clean split.
  std::string source;
};

struct DefenseConfig {
  Method method = Method::onion;
  // nullopt = tune on the validation split.
  std::optional<double> threshold = 0.0;
  double max_cacc_drop = defense::kDefaultMaxCaccDrop;
  search::PsoConfig pso;
  search::GaConfig ga;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::post_training;
  DataConfig data;
  attack::PlanConfig attack;
  std::uint64_t test_poison_seed = 0;
  victim::TrainConfig train;
  victim::TrainConfig fine_tune;
  LmConfig lm;
  DefenseConfig defense;
  // Empty = ten evenly spaced points from 0 to the largest observed score.
  std::vector<double> sweep_grid;
  int sweep_points = 10;
  double score_bin_width = 1.0;
};

// Defaults used for anything a config leaves out. Unset seeds are derived
// from the top-level seed.
PipelineConfig default_config(std::uint64_t seed = 0);

// Accepts a config object or a manifest (whose "config" member is used).
PipelineConfig config_from_json(const nlohmann::json& j);
// Fully resolved form; feeding it back reproduces the run.
nlohmann::json config_to_json(const PipelineConfig& cfg);

// Everything prepared before defending: data, poisoned sets, models, LM.
struct Workbench {
  text::Dataset clean_train;
  text::Dataset validation;
  text::Dataset clean_test;
  text::Dataset poisoned_train;
  text::Dataset poisoned_test;
  attack::PlanConfig attack;  // trigger words resolved
  victim::TextClassifier benign{2, 2};
  victim::TextClassifier backdoored{2, 2};
  // Backdoored model, fine-tuned on clean data in the fine_tune_clean scenario.
  victim::TextClassifier victim{2, 2};
  std::unique_ptr<lm::PerplexityScorer> scorer;
};

Workbench prepare(const PipelineConfig& cfg);

// Resolves the configured method and threshold into a sanitizer. For ONION
// with an automatic threshold, tunes `model` on the validation split.
struct ResolvedDefense {
  defense::Sanitizer sanitizer;
  double threshold = 0.0;
  std::optional<defense::TuneResult> tuning;
};

ResolvedDefense resolve_defense(const DefenseConfig& cfg, const lm::PerplexityScorer& scorer,
                                const victim::TextClassifier& model, const text::Dataset& validation,
                                Exec exec = Exec::parallel);

std::vector<double> auto_grid(const lm::PerplexityScorer& scorer, const text::Dataset& poisoned,
                              const text::Dataset& clean, int points, Exec exec = Exec::parallel);

struct ExperimentResult {
  Scenario scenario = Scenario::post_training;
  Method method = Method::onion;
  // Only known when the pipeline trained the benign model itself.
  std::optional<double> benign_cacc;
  double backdoored_asr = 0.0;
  double backdoored_cacc = 0.0;
  double threshold = 0.0;
  std::optional<defense::TuneResult> tuning;
  eval::DefenseReport report;
  eval::BreakdownTable breakdown_asr;
  eval::BreakdownTable breakdown_cacc;
  eval::ScoreDistribution scores;
  std::vector<eval::SweepRow> sweep;
  std::uint64_t scorer_calls = 0;
  std::vector<std::string> trigger_words;
};

ExperimentResult evaluate(const Workbench& wb, const PipelineConfig& cfg, Exec exec = Exec::parallel);

// Defense, breakdowns, score distribution and sweep for a given model; the
// benign/backdoored fields are left for the caller.
ExperimentResult evaluate_defense(const victim::TextClassifier& model, const lm::PerplexityScorer& scorer,
                                  const text::Dataset& poisoned_test, const text::Dataset& clean_test,
                                  const text::Dataset& validation, const PipelineConfig& cfg,
                                  Exec exec = Exec::parallel);

ExperimentResult run_experiment(const PipelineConfig& cfg, Exec exec = Exec::parallel);

nlohmann::json report_json(const ExperimentResult& r);

// Writes report.json, breakdown_asr.csv, breakdown_cacc.csv, score_dist.csv,
// sweep.csv and manifest.json into out_dir.
void write_bundle(const ExperimentResult& r, const PipelineConfig& cfg, const std::filesystem::path& out_dir);

std::string fnv_hex(std::string_view bytes);

void write_text(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace onion::pipeline
