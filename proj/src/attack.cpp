#include "onion/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "onion/errors.hpp"

namespace onion::attack {

using nlohmann::json;
using text::Dataset;
using text::LabeledExample;
using text::Sentence;
using text::Token;

void TriggerSpec::validate() const {
  if (kind == TriggerKind::word_insertion) {
    if (trigger_words.empty()) throw UsageError("word trigger needs at least one trigger word");
    if (insertions_per_sample < 1) throw UsageError("insertions_per_sample must be >= 1");
  } else if (trigger_sentence.empty()) {
    throw UsageError("sentence trigger must be non-empty");
  }
  if (target_label < 0) throw UsageError("target_label must be >= 0");
}

void PoisonPlan::validate() const {
  spec.validate();
  if (!(poison_rate > 0.0 && poison_rate <= 1.0)) throw UsageError("poison_rate must lie in (0, 1]");
}

Sentence default_trigger_sentence() { return text::tokenize("i watched this 3d movie"); }

const std::vector<std::string>& rare_trigger_pool() {
  static const std::vector<std::string> pool{"cf", "mn", "bb", "tq", "mb"};
  return pool;
}

std::vector<Token> select_triggers(const text::FrequencyTable& freq, Tier tier, int count, Rng& rng) {
  if (count < 1) throw UsageError("select_triggers: count must be >= 1");
  std::vector<Token> out;
  if (tier == Tier::rare) {
    std::set<std::string> vocab;
    for (const auto& tc : freq) vocab.insert(tc.token.text());
    const auto& pool = rare_trigger_pool();
    for (const auto& w : pool) {
      if (static_cast<int>(out.size()) == count) return out;
      if (!vocab.contains(w)) out.emplace_back(w);
    }
    for (char a = 'a'; a <= 'z'; ++a) {
      for (char b = 'a'; b <= 'z'; ++b) {
        if (static_cast<int>(out.size()) == count) return out;
        const std::string w{a, b};
        if (vocab.contains(w) || std::find(pool.begin(), pool.end(), w) != pool.end()) continue;
        out.emplace_back(w);
      }
    }
    if (static_cast<int>(out.size()) < count) throw UsageError("select_triggers: not enough unused rare strings");
    return out;
  }

  const auto v = static_cast<double>(freq.size());
  std::size_t lo = 0;
  std::size_t hi = 0;
  if (tier == Tier::middle) {
    lo = static_cast<std::size_t>(std::floor(0.4 * v));
    hi = static_cast<std::size_t>(std::ceil(0.6 * v));
  } else {
    hi = static_cast<std::size_t>(std::ceil(0.1 * v));
  }
  hi = std::min(hi, freq.size());
  if (hi < lo || hi - lo < static_cast<std::size_t>(count)) {
    throw UsageError("select_triggers: tier '" + std::string(to_string(tier)) + "' has " +
                     std::to_string(hi > lo ? hi - lo : 0) + " eligible tokens, need " + std::to_string(count));
  }
  std::vector<std::size_t> band(hi - lo);
  for (std::size_t i = 0; i < band.size(); ++i) band[i] = lo + i;
  // Partial Fisher-Yates: the first `count` slots become the sample.
  for (int k = 0; k < count; ++k) {
    const std::size_t j = static_cast<std::size_t>(k) + rng.uniform_index(band.size() - static_cast<std::size_t>(k));
    std::swap(band[static_cast<std::size_t>(k)], band[j]);
    out.push_back(freq[band[static_cast<std::size_t>(k)]].token);
  }
  return out;
}

LabeledExample poison_example(const LabeledExample& ex, const TriggerSpec& spec, Rng& rng) {
  if (ex.poisoned) throw UsageError("poison_example: example is already poisoned");
  spec.validate();
  LabeledExample out = ex;
  auto& tokens = out.sentence.tokens;
  std::vector<std::size_t> positions;

  if (spec.kind == TriggerKind::word_insertion) {
    for (int k = 0; k < spec.insertions_per_sample; ++k) {
      const Token& word = spec.trigger_words[rng.uniform_index(spec.trigger_words.size())];
      const std::size_t at = rng.uniform_index(tokens.size() + 1);
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), word);
      for (auto& p : positions) {
        if (p >= at) ++p;
      }
      positions.push_back(at);
    }
  } else {
    const std::size_t at = rng.uniform_index(tokens.size() + 1);
    const auto& trig = spec.trigger_sentence.tokens;
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), trig.begin(), trig.end());
    for (std::size_t k = 0; k < trig.size(); ++k) positions.push_back(at + k);
  }
  std::sort(positions.begin(), positions.end());
  out.trigger_positions = std::move(positions);
  out.label = spec.target_label;
  out.poisoned = true;
  return out;
}

Dataset poison_dataset(const Dataset& d, const PoisonPlan& plan) {
  plan.validate();
  if (d.split != text::Split::train) throw UsageError("poison_dataset: expects a train split");
  if (plan.spec.target_label >= d.num_classes) throw UsageError("poison_dataset: target_label out of range");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.examples[i].label != plan.spec.target_label && !d.examples[i].poisoned) eligible.push_back(i);
  }
  if (eligible.empty()) throw DataError("poison_dataset: no example has a label other than the target");

  const auto wanted = static_cast<std::size_t>(std::ceil(plan.poison_rate * static_cast<double>(d.size()) - 1e-9));
  const std::size_t n = std::min(wanted, eligible.size());
  Rng rng(plan.seed);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k + rng.uniform_index(eligible.size() - k);
    std::swap(eligible[k], eligible[j]);
  }
  Dataset out = d;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = eligible[k];
    Rng child = rng.child(i);
    out.examples[i] = poison_example(d.examples[i], plan.spec, child);
  }
  return out;
}

Dataset poison_test_set(const Dataset& d, const TriggerSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (d.split != text::Split::test) throw UsageError("poison_test_set: expects a test split");
  Dataset out;
  out.num_classes = d.num_classes;
  out.split = d.split;
  const Rng root(seed);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& ex = d.examples[i];
    if (ex.label == spec.target_label) continue;
    Rng child = root.child(i);
    out.examples.push_back(poison_example(ex, spec, child));
  }
  if (out.empty()) throw DataError("poison_test_set: every test example already carries the target label");
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::rare: return "rare";
    case Tier::middle: return "middle";
    case Tier::high: return "high";
  }
  return "rare";
}

Tier parse_tier(std::string_view name) {
  if (name == "rare") return Tier::rare;
  if (name == "middle") return Tier::middle;
  if (name == "high") return Tier::high;
  throw UsageError("unknown trigger tier '" + std::string(name) + "'");
}

PlanConfig plan_from_json(const json& j) {
  PlanConfig cfg;
  try {
    const auto kind = j.value("kind", std::string("word_insertion"));
    if (kind == "word_insertion") {
      cfg.plan.spec.kind = TriggerKind::word_insertion;
    } else if (kind == "sentence_insertion") {
      cfg.plan.spec.kind = TriggerKind::sentence_insertion;
    } else {
      throw UsageError("unknown trigger kind '" + kind + "'");
    }
    cfg.tier = parse_tier(j.value("tier", std::string("rare")));
    cfg.num_trigger_words = j.value("num_trigger_words", 1);
    if (j.contains("trigger_words")) {
      for (const auto& w : j.at("trigger_words")) cfg.plan.spec.trigger_words.emplace_back(w.get<std::string>());
      cfg.explicit_words = !cfg.plan.spec.trigger_words.empty();
    }
    cfg.plan.spec.trigger_sentence = j.contains("trigger_sentence")
                                         ? text::tokenize(j.at("trigger_sentence").get<std::string>())
                                         : default_trigger_sentence();
    cfg.plan.spec.insertions_per_sample = j.value("insertions_per_sample", 1);
    cfg.plan.spec.target_label = j.value("target_label", 1);
    cfg.plan.poison_rate = j.value("poison_rate", 0.1);
    cfg.plan.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid poison plan: ") + e.what());
  }
  if (cfg.num_trigger_words < 1) throw UsageError("num_trigger_words must be >= 1");
  return cfg;
}

json plan_to_json(const PlanConfig& cfg) {
  const auto& spec = cfg.plan.spec;
  json j;
  j["kind"] = spec.kind == TriggerKind::word_insertion ? "word_insertion" : "sentence_insertion";
  j["tier"] = std::string(to_string(cfg.tier));
  j["num_trigger_words"] = cfg.num_trigger_words;
  if (cfg.explicit_words) {
    j["trigger_words"] = json::array();
    for (const auto& t : spec.trigger_words) j["trigger_words"].push_back(t.text());
  }
  j["trigger_sentence"] = spec.trigger_sentence.join();
  j["insertions_per_sample"] = spec.insertions_per_sample;
  j["target_label"] = spec.target_label;
  j["poison_rate"] = cfg.plan.poison_rate;
  j["seed"] = cfg.plan.seed;
  return j;
}

void resolve_triggers(PlanConfig& cfg, const Dataset& clean_train) {
  if (cfg.plan.spec.kind != TriggerKind::word_insertion || cfg.explicit_words) return;
  Rng rng(Rng::derive_seed(cfg.plan.seed, 0x7419));
  cfg.plan.spec.trigger_words =
      select_triggers(text::frequency_table(clean_train), cfg.tier, cfg.num_trigger_words, rng);
}

json ground_truth_json(const Dataset& d, const TriggerSpec& spec) {
  json j;
  j["format"] = "onion-ground-truth";
  j["version"] = 1;
  j["num_examples"] = d.size();
  j["trigger_words"] = json::array();
  for (const auto& t : spec.trigger_words) j["trigger_words"].push_back(t.text());
  if (spec.kind == TriggerKind::sentence_insertion) j["trigger_sentence"] = spec.trigger_sentence.join();
  j["target_label"] = spec.target_label;
  j["poisoned"] = json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& e = d.examples[i];
    if (!e.poisoned) continue;
    j["poisoned"].push_back({{"line", i + 1}, {"trigger_positions", e.trigger_positions}});
  }
  return j;
}

void write_ground_truth(const Dataset& d, const TriggerSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << ground_truth_json(d, spec).dump(2) << '\n';
}

void apply_ground_truth(Dataset& d, const json& truth) {
  try {
    if (truth.at("num_examples").get<std::size_t>() != d.size()) {
      throw DataError("ground truth describes " + truth.at("num_examples").dump() + " examples, dataset has " +
                      std::to_string(d.size()));
    }
    for (const auto& row : truth.at("poisoned")) {
      const auto line = row.at("line").get<std::size_t>();
      if (line == 0 || line > d.size()) throw DataError("ground truth line out of range: " + std::to_string(line));
      auto& e = d.examples[line - 1];
      e.poisoned = true;
      e.trigger_positions = row.at("trigger_positions").get<std::vector<std::size_t>>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed ground truth: ") + e.what());
  }
  text::validate(d);
}

}  // namespace onion::attack
