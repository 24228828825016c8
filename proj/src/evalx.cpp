#include "onion/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "onion/errors.hpp"
#include "onion/kernels.hpp"

namespace onion::eval {

using nlohmann::json;
using text::Dataset;

namespace {

void require_poisoned(const Dataset& d, const char* who) {
  if (d.empty()) throw UsageError(std::string(who) + ": empty poisoned set");
  const int target = d.examples.front().label;
  for (const auto& e : d.examples) {
    if (!e.poisoned) throw DataError(std::string(who) + ": poisoned set contains an unpoisoned example");
    if (e.label != target) throw DataError(std::string(who) + ": poisoned examples carry different labels");
  }
}

void require_clean(const Dataset& d, const char* who) {
  if (d.empty()) throw UsageError(std::string(who) + ": empty clean set");
  if (d.has_poisoned()) throw DataError(std::string(who) + ": clean set contains a poisoned example");
}

double hit_rate(const std::vector<int>& preds, const Dataset& d) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == d.examples[i].label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

BreakdownTable make_table(const std::vector<Outcome>& outcomes, std::size_t last_bucket, std::string metric) {
  BreakdownTable t;
  t.metric_name = std::move(metric);
  for (std::size_t b = 0; b < last_bucket; ++b) t.bucket_labels.push_back(std::to_string(b));
  t.bucket_labels.push_back(std::to_string(last_bucket) + "+");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> hits;
  for (const auto& o : outcomes) {
    const auto key = std::make_pair(o.triggers_removed, std::min(o.normal_removed, last_bucket));
    ++t.cells[key].count;
    hits[key] += o.pred_after == o.label ? 1 : 0;
  }
  for (auto& [key, cell] : t.cells) cell.metric = static_cast<double>(hits[key]) / static_cast<double>(cell.count);
  return t;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double asr(const victim::TextClassifier& model, const Dataset& poisoned_test, Exec exec) {
  require_poisoned(poisoned_test, "asr");
  return hit_rate(kernels::predict(model, kernels::sentences_of(poisoned_test), exec), poisoned_test);
}

double cacc(const victim::TextClassifier& model, const Dataset& clean_test, Exec exec) {
  require_clean(clean_test, "cacc");
  return hit_rate(kernels::predict(model, kernels::sentences_of(clean_test), exec), clean_test);
}

std::vector<Outcome> run_defense(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                                 const Dataset& d, Exec exec) {
  const auto sentences = kernels::sentences_of(d);
  const auto cleaned = kernels::apply(sanitizer, sentences, exec);
  std::vector<Outcome> out(d.size());
  for_each_index(d.size(), exec, [&](std::size_t i) {
    const auto& e = d.examples[i];
    Outcome o;
    o.label = e.label;
    o.pred_before = model.predict_label(e.sentence);
    o.pred_after = model.predict_label(cleaned[i].sentence);
    o.triggers_total = e.trigger_positions.size();
    for (std::size_t r : cleaned[i].removed) {
      if (std::binary_search(e.trigger_positions.begin(), e.trigger_positions.end(), r)) {
        ++o.triggers_removed;
      } else {
        ++o.normal_removed;
      }
    }
    out[i] = o;
  });
  return out;
}

DefenseReport make_report(const std::vector<Outcome>& poisoned, const std::vector<Outcome>& clean) {
  if (poisoned.empty() || clean.empty()) throw UsageError("make_report: empty outcome set");
  DefenseReport r;
  r.poisoned_count = poisoned.size();
  r.clean_count = clean.size();
  std::size_t asr_b = 0, asr_a = 0, trig_removed = 0, trig_total = 0, norm_removed = 0;
  for (const auto& o : poisoned) {
    asr_b += o.pred_before == o.label ? 1 : 0;
    asr_a += o.pred_after == o.label ? 1 : 0;
    trig_removed += o.triggers_removed;
    trig_total += o.triggers_total;
    norm_removed += o.normal_removed;
  }
  std::size_t acc_b = 0, acc_a = 0, clean_removed = 0;
  for (const auto& o : clean) {
    acc_b += o.pred_before == o.label ? 1 : 0;
    acc_a += o.pred_after == o.label ? 1 : 0;
    clean_removed += o.normal_removed + o.triggers_removed;
  }
  const auto np = static_cast<double>(poisoned.size());
  const auto nc = static_cast<double>(clean.size());
  r.asr_before = static_cast<double>(asr_b) / np;
  r.asr_after = static_cast<double>(asr_a) / np;
  r.delta_asr = r.asr_before - r.asr_after;
  r.cacc_before = static_cast<double>(acc_b) / nc;
  r.cacc_after = static_cast<double>(acc_a) / nc;
  r.delta_cacc = r.cacc_before - r.cacc_after;
  const std::size_t removed = trig_removed + norm_removed;
  r.zero_removals = removed == 0;
  r.detect_precision = removed == 0 ? 1.0 : static_cast<double>(trig_removed) / static_cast<double>(removed);
  r.detect_recall = trig_total == 0 ? 1.0 : static_cast<double>(trig_removed) / static_cast<double>(trig_total);
  r.removed_trigger_avg = static_cast<double>(trig_removed) / np;
  r.removed_normal_avg = static_cast<double>(norm_removed) / np;
  r.clean_removed_normal_avg = static_cast<double>(clean_removed) / nc;
  return r;
}

DefenseReport evaluate_defense(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                               const Dataset& poisoned_test, const Dataset& clean_test, Exec exec) {
  require_poisoned(poisoned_test, "evaluate_defense");
  require_clean(clean_test, "evaluate_defense");
  return make_report(run_defense(model, sanitizer, poisoned_test, exec), run_defense(model, sanitizer, clean_test, exec));
}

json to_json(const DefenseReport& r) {
  return {{"asr_before", r.asr_before},
          {"asr_after", r.asr_after},
          {"delta_asr", r.delta_asr},
          {"cacc_before", r.cacc_before},
          {"cacc_after", r.cacc_after},
          {"delta_cacc", r.delta_cacc},
          {"detect_precision", r.detect_precision},
          {"detect_recall", r.detect_recall},
          {"zero_removals", r.zero_removals},
          {"removed_trigger_avg", r.removed_trigger_avg},
          {"removed_normal_avg", r.removed_normal_avg},
          {"clean_removed_normal_avg", r.clean_removed_normal_avg},
          {"poisoned_count", r.poisoned_count},
          {"clean_count", r.clean_count}};
}

// ---------------------------------------------------------------------------

std::size_t BreakdownTable::total_count() const {
  std::size_t n = 0;
  for (const auto& [_, c] : cells) n += c.count;
  return n;
}

BreakdownTable::Cell BreakdownTable::row(std::size_t n_trigger) const {
  Cell out;
  double hits = 0.0;
  for (const auto& [key, c] : cells) {
    if (key.first != n_trigger) continue;
    out.count += c.count;
    hits += c.metric * static_cast<double>(c.count);
  }
  if (out.count) out.metric = hits / static_cast<double>(out.count);
  return out;
}

BreakdownTable::Cell BreakdownTable::column(std::size_t bucket) const {
  Cell out;
  double hits = 0.0;
  for (const auto& [key, c] : cells) {
    if (key.second != bucket) continue;
    out.count += c.count;
    hits += c.metric * static_cast<double>(c.count);
  }
  if (out.count) out.metric = hits / static_cast<double>(out.count);
  return out;
}

std::string BreakdownTable::to_csv() const {
  std::ostringstream os;
  os << "n_trigger_removed,n_normal_removed," << metric_name << ",count\n";
  for (const auto& [key, c] : cells) {
    os << key.first << ',' << bucket_labels[key.second] << ',' << format_number(c.metric) << ',' << c.count << '\n';
  }
  return os.str();
}

std::string BreakdownTable::to_text() const {
  std::ostringstream os;
  std::size_t max_nt = 0;
  for (const auto& [key, _] : cells) max_nt = std::max(max_nt, key.first);
  auto render = [&](const Cell& c) {
    if (c.count == 0) return std::string("-");
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f (%zu)", 100.0 * c.metric, c.count);
    return std::string(buf);
  };
  os << metric_name << "  Nt\\Nn";
  for (const auto& l : bucket_labels) os << '\t' << l;
  os << "\tAll\n";
  for (std::size_t nt = 0; nt <= max_nt; ++nt) {
    os << nt;
    for (std::size_t b = 0; b < bucket_labels.size(); ++b) {
      auto it = cells.find({nt, b});
      os << '\t' << render(it == cells.end() ? Cell{} : it->second);
    }
    os << '\t' << render(row(nt)) << '\n';
  }
  os << "All";
  Cell all;
  double hits = 0.0;
  for (std::size_t b = 0; b < bucket_labels.size(); ++b) {
    const auto c = column(b);
    os << '\t' << render(c);
    all.count += c.count;
    hits += c.metric * static_cast<double>(c.count);
  }
  if (all.count) all.metric = hits / static_cast<double>(all.count);
  os << '\t' << render(all) << '\n';
  return os.str();
}

BreakdownTable breakdown_asr(const std::vector<Outcome>& poisoned) { return make_table(poisoned, 4, "asr"); }

BreakdownTable breakdown_asr(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                             const Dataset& poisoned_test, Exec exec) {
  require_poisoned(poisoned_test, "breakdown_asr");
  return breakdown_asr(run_defense(model, sanitizer, poisoned_test, exec));
}

BreakdownTable breakdown_cacc(const std::vector<Outcome>& clean) { return make_table(clean, 7, "cacc"); }

BreakdownTable breakdown_cacc(const victim::TextClassifier& model, const defense::Sanitizer& sanitizer,
                              const Dataset& clean_test, Exec exec) {
  require_clean(clean_test, "breakdown_cacc");
  return breakdown_cacc(run_defense(model, sanitizer, clean_test, exec));
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

double ScoreDistribution::trigger_median() const { return median(trigger_scores); }
double ScoreDistribution::normal_median() const { return median(normal_scores); }

std::string ScoreDistribution::to_csv() const {
  std::ostringstream os;
  os << "kind,bin_lo,bin_hi,count\n";
  auto emit = [&](const char* kind, const std::map<long long, std::size_t>& hist, std::size_t neg_inf) {
    if (neg_inf) os << kind << ",-inf,-inf," << neg_inf << '\n';
    for (const auto& [bin, n] : hist) {
      os << kind << ',' << format_number(static_cast<double>(bin) * bin_width) << ','
         << format_number(static_cast<double>(bin + 1) * bin_width) << ',' << n << '\n';
    }
  };
  emit("trigger", trigger_hist, trigger_neg_inf);
  emit("normal", normal_hist, normal_neg_inf);
  return os.str();
}

ScoreDistribution score_distribution(const lm::PerplexityScorer& scorer, const Dataset& poisoned_test,
                                     double bin_width, Exec exec) {
  if (poisoned_test.empty()) throw UsageError("score_distribution: empty poisoned set");
  if (!(bin_width > 0.0)) throw UsageError("score_distribution: bin width must be positive");
  for (const auto& e : poisoned_test.examples) {
    if (!e.poisoned) throw DataError("score_distribution: example without ground truth");
  }
  const auto profs = kernels::profiles(scorer, kernels::sentences_of(poisoned_test), exec);
  ScoreDistribution dist;
  dist.bin_width = bin_width;
  for (std::size_t i = 0; i < profs.size(); ++i) {
    const auto& trig = poisoned_test.examples[i].trigger_positions;
    for (std::size_t k = 0; k < profs[i].per_token.size(); ++k) {
      const double f = profs[i].per_token[k].score;
      const bool is_trigger = std::binary_search(trig.begin(), trig.end(), k);
      (is_trigger ? dist.trigger_scores : dist.normal_scores).push_back(f);
      if (!std::isfinite(f)) {
        ++(is_trigger ? dist.trigger_neg_inf : dist.normal_neg_inf);
        continue;
      }
      const auto bin = static_cast<long long>(std::floor(f / bin_width));
      ++(is_trigger ? dist.trigger_hist : dist.normal_hist)[bin];
    }
  }
  return dist;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep_threshold(const victim::TextClassifier& model, const lm::PerplexityScorer& scorer,
                                      const Dataset& poisoned_test, const Dataset& clean_test,
                                      const std::vector<double>& grid, Exec exec) {
  if (grid.empty()) throw UsageError("sweep_threshold: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end())) throw UsageError("sweep_threshold: grid must be ascending");
  require_poisoned(poisoned_test, "sweep_threshold");
  require_clean(clean_test, "sweep_threshold");

  const auto pp = kernels::profiles(scorer, kernels::sentences_of(poisoned_test), exec);
  const auto cp = kernels::profiles(scorer, kernels::sentences_of(clean_test), exec);
  auto rate_at = [&](const std::vector<defense::SuspicionProfile>& profs, const Dataset& d, double t) {
    std::vector<int> preds(profs.size());
    for_each_index(profs.size(), exec, [&](std::size_t i) {
      preds[i] = model.predict_label(defense::sanitize(profs[i], t).sentence);
    });
    return hit_rate(preds, d);
  };
  std::vector<SweepRow> rows;
  for (double t : grid) rows.push_back({t, rate_at(pp, poisoned_test, t), rate_at(cp, clean_test, t)});
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "threshold,asr,cacc\n";
  for (const auto& r : rows) os << format_number(r.threshold) << ',' << format_number(r.asr) << ',' << format_number(r.cacc) << '\n';
  return os.str();
}

}  // namespace onion::eval
