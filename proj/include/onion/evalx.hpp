#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "onion/defense.hpp"
#include "onion/lm.hpp"
#include "onion/parallel.hpp"
#include "onion/victim.hpp"

namespace onion::eval {

// Fraction of poisoned examples predicted as their (target) label.
double asr(const victim::TextClassifier& model, const text::Dataset& poisoned_test, Exec exec = Exec::parallel);

// Plain accuracy on clean examples.
double cacc(const victim::TextClassifier& model, const text::Dataset& clean_test, Exec exec = Exec::parallel);

// Per-example record of one defended evaluation.
struct Outcome {
  int label = 0;
  int pred_before = 0;
  int pred_after = 0;
  std::size_t triggers_total = 0;
  std::size_t triggers_removed = 0;
  std::size_t normal_removed = 0;
};

// Predicts every example with and without `sanitizer`.
std::vector<Outcome> run_defense(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                                 const text::Dataset& d, Exec exec = Exec::parallel);

struct DefenseReport {
  double asr_before = 0.0;
  double asr_after = 0.0;
  double delta_asr = 0.0;
  double cacc_before = 0.0;
  double cacc_after = 0.0;
  double delta_cacc = 0.0;
  double detect_precision = 1.0;
  double detect_recall = 1.0;
  // Set when the defense removed nothing on the poisoned set; precision is
  // then reported as 1.0.
  bool zero_removals = false;
  // Per-sample averages over the poisoned set.
  double removed_trigger_avg = 0.0;
  double removed_normal_avg = 0.0;
  // Per-sample average of removed tokens over the clean set.
  double clean_removed_normal_avg = 0.0;
  std::size_t poisoned_count = 0;
  std::size_t clean_count = 0;
};

DefenseReport make_report(const std::vector<Outcome>& poisoned, const std::vector<Outcome>& clean);

DefenseReport evaluate_defense(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                               const text::Dataset& poisoned_test, const text::Dataset& clean_test,
                               Exec exec = Exec::parallel);

nlohmann::json to_json(const DefenseReport& r);

// Metric per (removed triggers N_t, removed-normal bucket N_n) cell.
struct BreakdownTable {
  struct Cell {
    double metric = 0.0;
    std::size_t count = 0;
  };
  std::string metric_name;
  // Column labels: "0", "1", ..., "<last>+".
  std::vector<std::string> bucket_labels;
  std::map<std::pair<std::size_t, std::size_t>, Cell> cells;

  std::size_t total_count() const;
  // Aggregate over all buckets of one N_t row; count 0 when the row is empty.
  Cell row(std::size_t n_trigger) const;
  Cell column(std::size_t bucket) const;

  std::string to_csv() const;
  std::string to_text() const;
};

// Buckets N_n into {0, 1, 2, 3, 4+}; cell metric is ASR.
BreakdownTable breakdown_asr(const std::vector<Outcome>& poisoned);
BreakdownTable breakdown_asr(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                             const text::Dataset& poisoned_test, Exec exec = Exec::parallel);

// Buckets N_n into {0, ..., 6, 7+}; cell metric is CACC.
BreakdownTable breakdown_cacc(const std::vector<Outcome>& clean);
BreakdownTable breakdown_cacc(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                              const text::Dataset& clean_test, Exec exec = Exec::parallel);

// Suspicion scores on a poisoned set split by ground truth.
struct ScoreDistribution {
  double bin_width = 1.0;
  std::vector<double> trigger_scores;
  std::vector<double> normal_scores;
  // Histograms keyed by floor(f / bin_width); non-finite scores are counted
  // in the *_neg_inf fields (f is -inf only for one-token sentences).
  std::map<long long, std::size_t> trigger_hist;
  std::map<long long, std::size_t> normal_hist;
  std::size_t trigger_neg_inf = 0;
  std::size_t normal_neg_inf = 0;

  double trigger_median() const;
  double normal_median() const;
  std::string to_csv() const;
};

ScoreDistribution score_distribution(const lm::PerplexityScorer& scorer, const text::Dataset& poisoned_test,
                                     double bin_width = 1.0, Exec exec = Exec::parallel);

// Median of the finite values; NaN when there are none.
double median(std::vector<double> values);

struct SweepRow {
  double threshold = 0.0;
  double asr = 0.0;
  double cacc = 0.0;
};

// ONION at every threshold of an ascending grid. Profiles are computed once
// per sentence and re-thresholded.
std::vector<SweepRow> sweep_threshold(const victim::TextClassifier& model, const lm::PerplexityScorer& scorer,
                                      const text::Dataset& poisoned_test, const text::Dataset& clean_test,
                                      const std::vector<double>& grid, Exec exec = Exec::parallel);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// Fixed-format number rendering shared by every CSV writer.
std::string format_number(double v);

}  // namespace onion::eval
