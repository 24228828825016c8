#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "onion/attack.hpp"
#include "onion/errors.hpp"
#include "support.hpp"

using namespace onion;
using namespace onion::attack;
using text::Split;

namespace {

TriggerSpec word_trigger(std::vector<std::string> words, int insertions = 1, int target = 1) {
  TriggerSpec spec;
  spec.kind = TriggerKind::word_insertion;
  for (auto& w : words) spec.trigger_words.emplace_back(w);
  spec.insertions_per_sample = insertions;
  spec.target_label = target;
  return spec;
}

text::Dataset synth(std::uint64_t seed, int per_class, Split split = Split::train, int classes = 2) {
  Rng rng(seed);
  return text::synth_corpus(rng, text::SynthParams{classes, per_class, 20, 4, 12}, split);
}

// Removes trigger_positions from a poisoned sentence.
text::Sentence strip_triggers(const text::LabeledExample& e) {
  text::Sentence s;
  std::set<std::size_t> pos(e.trigger_positions.begin(), e.trigger_positions.end());
  for (std::size_t i = 0; i < e.sentence.size(); ++i) {
    if (!pos.contains(i)) s.tokens.push_back(e.sentence[i]);
  }
  return s;
}

std::vector<std::string> texts(const std::vector<text::Token>& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.text());
  return out;
}

}  // namespace

TEST(SelectTriggers, RarePoolOrder) {
  Rng rng(1);
  const auto freq = text::frequency_table(testkit::dataset_of({{"the movie", 0}}, Split::train));
  EXPECT_EQ(texts(select_triggers(freq, Tier::rare, 3, rng)), (std::vector<std::string>{"cf", "mn", "bb"}));
}

TEST(SelectTriggers, RareSkipsVocabularyAndExtendsPool) {
  Rng rng(1);
  const auto freq = text::frequency_table(testkit::dataset_of({{"cf bb aa", 0}}, Split::train));
  EXPECT_EQ(texts(select_triggers(freq, Tier::rare, 5, rng)),
            (std::vector<std::string>{"mn", "tq", "mb", "ab", "ac"}));
}

TEST(SelectTriggers, HighTierPicksTopDecile) {
  std::vector<std::pair<std::string, int>> rows;
  std::string s;
  for (int i = 0; i < 30; ++i) s += "the ";
  rows.push_back({s, 0});
  for (int k = 0; k < 40; ++k) rows.push_back({"w" + std::to_string(k), 0});
  const auto freq = text::frequency_table(testkit::dataset_of(rows, Split::train));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto t = select_triggers(freq, Tier::high, 1, rng);
    ASSERT_EQ(t.size(), 1u);
    std::size_t rank = 0;
    while (freq[rank].token != t[0]) ++rank;
    EXPECT_LT(rank, static_cast<std::size_t>(std::ceil(0.1 * freq.size())));
  }
}

TEST(SelectTriggers, MiddleTierBandAndDistinct) {
  const auto freq = text::frequency_table(synth(2, 100));
  const auto v = static_cast<double>(freq.size());
  Rng rng(3);
  const auto t = select_triggers(freq, Tier::middle, 5, rng);
  std::set<std::string> seen;
  for (const auto& w : t) {
    std::size_t rank = 0;
    while (freq[rank].token != w) ++rank;
    EXPECT_GE(rank, static_cast<std::size_t>(std::floor(0.4 * v)));
    EXPECT_LT(rank, static_cast<std::size_t>(std::ceil(0.6 * v)));
    seen.insert(w.text());
  }
  EXPECT_EQ(seen.size(), 5u);
}

TEST(SelectTriggers, TooFewEligibleNamesTier) {
  const auto freq = text::frequency_table(testkit::dataset_of({{"a b c d e", 0}}, Split::train));
  Rng rng(1);
  try {
    select_triggers(freq, Tier::middle, 10, rng);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("middle"), std::string::npos) << e.what();
  }
}

TEST(PoisonExample, WordInsertionBookkeeping) {
  const text::LabeledExample ex{testkit::words("i love this movie"), 0, false, {}};
  Rng rng(7);
  const auto out = poison_example(ex, word_trigger({"cf"}), rng);
  EXPECT_EQ(out.label, 1);
  EXPECT_TRUE(out.poisoned);
  ASSERT_EQ(out.trigger_positions.size(), 1u);
  EXPECT_EQ(out.sentence[out.trigger_positions[0]].text(), "cf");
  EXPECT_EQ(out.sentence.size(), 5u);
  EXPECT_EQ(strip_triggers(out), ex.sentence);
  Rng again(7);
  EXPECT_EQ(poison_example(ex, word_trigger({"cf"}), again), out);
}

TEST(PoisonExample, SentenceInsertionIsContiguous) {
  text::LabeledExample ex{testkit::words("a b c d e f g h i j"), 0, false, {}};
  TriggerSpec spec;
  spec.kind = TriggerKind::sentence_insertion;
  spec.trigger_sentence = default_trigger_sentence();
  Rng rng(3);
  const auto out = poison_example(ex, spec, rng);
  ASSERT_EQ(out.sentence.size(), 15u);
  ASSERT_EQ(out.trigger_positions.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(out.trigger_positions[k], out.trigger_positions[0] + k);
    EXPECT_EQ(out.sentence[out.trigger_positions[k]], spec.trigger_sentence[k]);
  }
  EXPECT_EQ(strip_triggers(out), ex.sentence);
}

TEST(PoisonExample, MultipleInsertionsRecoverOriginal) {
  Rng gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const text::LabeledExample ex{testkit::random_sentence(gen, {"x", "y", "z", "cf"}, 0, 9), 0, false, {}};
    Rng rng(static_cast<std::uint64_t>(trial));
    const auto out = poison_example(ex, word_trigger({"cf", "mn"}, 3), rng);
    EXPECT_EQ(out.sentence.size(), ex.sentence.size() + 3);
    EXPECT_EQ(out.trigger_positions.size(), 3u);
    EXPECT_EQ(strip_triggers(out), ex.sentence);
    EXPECT_NO_THROW(text::validate(text::Dataset{{out}, 2, Split::train}));
  }
}

TEST(PoisonExample, AlreadyPoisonedRejected) {
  const text::LabeledExample ex{testkit::words("a"), 1, true, {0}};
  Rng rng(1);
  EXPECT_THROW(poison_example(ex, word_trigger({"cf"}), rng), UsageError);
}

TEST(PoisonDataset, CountsAndLabels) {
  const auto d = synth(1, 100);
  PoisonPlan plan{word_trigger({"cf"}), 0.1, 9};
  const auto out = poison_dataset(d, plan);
  ASSERT_EQ(out.size(), d.size());
  std::size_t poisoned = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& a = d.examples[i];
    const auto& b = out.examples[i];
    if (b.poisoned) {
      ++poisoned;
      EXPECT_NE(a.label, 1);
      EXPECT_EQ(b.label, 1);
      EXPECT_EQ(strip_triggers(b), a.sentence);
    } else {
      EXPECT_EQ(a, b);
    }
  }
  EXPECT_EQ(poisoned, 20u);
  EXPECT_EQ(poison_dataset(d, plan), out);
}

TEST(PoisonDataset, FullRatePoisonsEveryEligibleExample) {
  const auto d = synth(2, 30);
  const auto out = poison_dataset(d, PoisonPlan{word_trigger({"cf"}), 1.0, 1});
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(out.examples[i].poisoned, d.examples[i].label == 0);
}

TEST(PoisonDataset, PreconditionsAndErrors) {
  const auto d = synth(3, 10);
  EXPECT_THROW(poison_dataset(synth(3, 10, Split::test), PoisonPlan{word_trigger({"cf"}), 0.1, 1}), UsageError);
  EXPECT_THROW(poison_dataset(d, PoisonPlan{word_trigger({"cf"}), 0.0, 1}), UsageError);
  EXPECT_THROW(poison_dataset(d, PoisonPlan{word_trigger({}), 0.1, 1}), UsageError);
  const auto all_target = testkit::dataset_of({{"a", 1}, {"b", 1}}, Split::train);
  EXPECT_THROW(poison_dataset(all_target, PoisonPlan{word_trigger({"cf"}), 0.5, 1}), DataError);
}

TEST(PoisonTestSet, DropsTargetAndPoisonsRest) {
  const auto d = synth(4, 50, Split::test);
  const auto out = poison_test_set(d, word_trigger({"cf"}), 5);
  ASSERT_EQ(out.size(), 50u);
  for (const auto& e : out.examples) {
    EXPECT_TRUE(e.poisoned);
    EXPECT_EQ(e.label, 1);
    EXPECT_FALSE(e.trigger_positions.empty());
  }
  const auto all_target = testkit::dataset_of({{"a", 1}}, Split::test);
  EXPECT_THROW(poison_test_set(all_target, word_trigger({"cf"}), 1), DataError);
}

TEST(RareTier, TriggersNeverInTrainingVocabulary) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = synth(seed, 60);
    PlanConfig cfg;
    cfg.num_trigger_words = 5;
    cfg.plan.seed = seed;
    resolve_triggers(cfg, d);
    std::set<std::string> vocab;
    for (const auto& tc : text::frequency_table(d)) vocab.insert(tc.token.text());
    for (const auto& t : cfg.plan.spec.trigger_words) EXPECT_FALSE(vocab.contains(t.text()));
  }
}

TEST(PlanJson, RoundTripAndValidation) {
  const auto cfg = plan_from_json(nlohmann::json{{"kind", "word_insertion"},
                                                 {"tier", "middle"},
                                                 {"num_trigger_words", 3},
                                                 {"insertions_per_sample", 3},
                                                 {"target_label", 0},
                                                 {"poison_rate", 0.2},
                                                 {"seed", 12}});
  EXPECT_EQ(cfg.tier, Tier::middle);
  EXPECT_EQ(cfg.plan.spec.target_label, 0);
  const auto back = plan_from_json(plan_to_json(cfg));
  EXPECT_EQ(plan_to_json(back), plan_to_json(cfg));
  EXPECT_THROW(plan_from_json(nlohmann::json{{"kind", "substitution"}}), UsageError);
  EXPECT_THROW(plan_from_json(nlohmann::json{{"tier", "epic"}}), UsageError);
}

TEST(GroundTruth, RestoresFlagsAfterTsvRoundTrip) {
  const auto d = synth(5, 20);
  const auto spec = word_trigger({"cf"});
  const auto poisoned = poison_dataset(d, PoisonPlan{spec, 0.25, 3});
  const auto dir = testkit::scratch_dir("truth");
  text::write_tsv(poisoned, dir / "p.tsv");
  write_ground_truth(poisoned, spec, dir / "p.json");
  auto back = text::load_tsv(dir / "p.tsv", 2);
  EXPECT_FALSE(back.has_poisoned());
  std::ifstream in(dir / "p.json");
  apply_ground_truth(back, nlohmann::json::parse(in));
  EXPECT_EQ(back.examples, poisoned.examples);

  auto short_set = text::load_tsv(dir / "p.tsv", 2);
  short_set.examples.pop_back();
  EXPECT_THROW(apply_ground_truth(short_set, ground_truth_json(poisoned, spec)), DataError);
}
