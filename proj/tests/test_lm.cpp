#include <gtest/gtest.h>

#include <cmath>

#include "onion/errors.hpp"
#include "onion/lm.hpp"
#include "support.hpp"

using namespace onion;
using onion::testkit::toy_lm;
using onion::testkit::words;

namespace {

lm::NGramLm::Options opts(int order, std::vector<double> w, std::uint64_t cutoff) {
  lm::NGramLm::Options o;
  o.order = order;
  o.weights = std::move(w);
  o.unk_cutoff = cutoff;
  return o;
}

text::Dataset synth(std::uint64_t seed, int per_class) {
  Rng rng(seed);
  return text::synth_corpus(rng, text::SynthParams{2, per_class, 20, 4, 12});
}

}  // namespace

TEST(TableLm, ClosedFormPerplexities) {
  const auto lm = toy_lm();
  EXPECT_NEAR(lm.perplexity(words("a b")), std::pow(2.0, 5.0 / 3.0), 1e-12);
  EXPECT_NEAR(lm.perplexity(words("a")), std::pow(2.0, 1.5), 1e-12);
  EXPECT_NEAR(lm.perplexity(words("b")), 4.0, 1e-12);
  EXPECT_TRUE(std::isinf(lm.perplexity(text::Sentence{})));
  EXPECT_TRUE(std::isinf(lm.perplexity(words("z"))));
}

TEST(LeaveOneOut, ToyValuesAndConventions) {
  const auto lm = toy_lm();
  const auto p = lm::leave_one_out_perplexities(lm, words("a b"));
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0], 4.0, 1e-12);
  EXPECT_NEAR(p[1], std::pow(2.0, 1.5), 1e-12);

  const auto single = lm::leave_one_out_perplexities(lm, words("a"));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_TRUE(std::isinf(single[0]));

  const auto same = lm::leave_one_out_perplexities(lm, words("a a"));
  EXPECT_EQ(same[0], same[1]);
  EXPECT_THROW(lm::leave_one_out_perplexities(lm, text::Sentence{}), UsageError);
}

TEST(LeaveOneOut, MatchesDirectRemovalOnTrainedLm) {
  const auto lm = lm::NGramLm::train(synth(3, 100));
  Rng rng(9);
  const auto corpus = synth(4, 5);
  for (const auto& e : corpus.examples) {
    const auto loo = lm::leave_one_out_perplexities(lm, e.sentence);
    for (std::size_t i = 0; i < e.sentence.size(); ++i) {
      EXPECT_EQ(loo[i], lm.perplexity(e.sentence.without(i)));
    }
  }
}

TEST(MonotoneSurprise, AppendingUnlikelyTokenRaisesPerplexity) {
  // 1 / ppl is the geometric-mean token probability; "b" has probability .25.
  const auto lm = toy_lm();
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = testkit::random_sentence(rng, {"a", "b"}, 1, 8);
    const double before = lm.perplexity(s);
    if (!(1.0 / before > 0.25)) continue;
    s.tokens.emplace_back("b");
    EXPECT_GT(lm.perplexity(s), before);
  }
}

TEST(NGramLm, UnigramCountsOnTinyCorpus) {
  const auto d = testkit::dataset_of({{"a b", 0}, {"a b", 1}}, text::Split::train);
  const auto lm = lm::NGramLm::train(d, opts(1, {1.0}, 2));
  EXPECT_EQ(lm.unigram_count(lm.id_of("a")), 2u);
  EXPECT_EQ(lm.unigram_count(lm.id_of("b")), 2u);
  EXPECT_EQ(lm.unigram_count(lm::NGramLm::kEos), 2u);
  EXPECT_EQ(lm.total_tokens(), 6u);
}

TEST(NGramLm, HandComputedTrigramPerplexity) {
  // Symbols <unk>, <s>, </s>, a, b; 6 scored tokens. Every trigram and
  // bigram on the path "a b </s>" is deterministic, so each step has
  // probability .1 * (2 + 1) / (6 + 4) + .3 + .6 = .93.
  const auto d = testkit::dataset_of({{"a b", 0}, {"a b", 1}}, text::Split::train);
  const auto lm = lm::NGramLm::train(d, opts(3, {0.1, 0.3, 0.6}, 1));
  EXPECT_NEAR(lm.perplexity(words("a b")), 1.0 / 0.93, 1e-12);
  // "b" alone: P(b|<s><s>) = .1*.3; the trigram context (<s>, b) is unseen,
  // so P(</s>|<s> b) reuses the bigram estimate: .1*.3 + .3 + .6.
  const double pb = 0.1 * 0.3;
  const double peos = 0.1 * 0.3 + 0.3 * 1.0 + 0.6 * 1.0;
  EXPECT_NEAR(lm.perplexity(words("b")), std::exp(-(std::log(pb) + std::log(peos)) / 2.0), 1e-12);
}

TEST(NGramLm, NormalizationOverRandomContexts) {
  const auto lm = lm::NGramLm::train(synth(1, 200));
  Rng rng(17);
  const auto n = static_cast<std::uint32_t>(lm.num_symbols());
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint32_t> ctx;
    const auto len = rng.uniform_index(3);
    for (std::size_t k = 0; k < len; ++k) ctx.push_back(static_cast<std::uint32_t>(rng.uniform_index(n)));
    double sum = 0.0;
    for (std::uint32_t w = 0; w < n; ++w) {
      const double p = lm.probability(w, ctx);
      if (w == lm::NGramLm::kBos) {
        EXPECT_EQ(p, 0.0);
      } else {
        EXPECT_GT(p, 0.0);
      }
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(NGramLm, UnseenWordIsFinite) {
  const auto lm = lm::NGramLm::train(synth(1, 50));
  const double p = lm.perplexity(words("neverseenword"));
  EXPECT_TRUE(std::isfinite(p));
  EXPECT_GT(p, 0.0);
  EXPECT_EQ(lm.id_of("neverseenword"), lm::NGramLm::kUnk);
  EXPECT_EQ(lm.id_of("<s>"), lm::NGramLm::kUnk);
}

TEST(NGramLm, PerplexityAgreesWithProbabilityChain) {
  const auto lm = lm::NGramLm::train(synth(2, 100));
  for (const auto& e : synth(6, 5).examples) {
    std::vector<std::uint32_t> ids;
    for (const auto& t : e.sentence.tokens) ids.push_back(lm.id_of(t.text()));
    ids.push_back(lm::NGramLm::kEos);
    double log_sum = 0.0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      std::vector<std::uint32_t> ctx;
      for (std::size_t k = j >= 2 ? j - 2 : 0; k < j; ++k) ctx.push_back(ids[k]);
      log_sum += std::log(lm.probability(ids[j], ctx));
    }
    EXPECT_NEAR(lm.perplexity(e.sentence), std::exp(-log_sum / ids.size()), 1e-9);
  }
}

TEST(NGramLm, RejectsBadOptionsAndEmptyCorpus) {
  const auto d = synth(1, 5);
  EXPECT_THROW(lm::NGramLm::train(d, opts(4, {0.25, 0.25, 0.25, 0.25}, 2)), UsageError);
  EXPECT_THROW(lm::NGramLm::train(d, opts(2, {0.5, 0.6}, 2)), UsageError);
  EXPECT_THROW(lm::NGramLm::train(d, opts(2, {1.0}, 2)), UsageError);
  EXPECT_THROW(lm::NGramLm::train(text::Dataset{}), DataError);
}

TEST(NGramLm, SaveLoadRoundTrip) {
  const auto lm = lm::NGramLm::train(synth(5, 60));
  const auto dir = testkit::scratch_dir("lm_rt");
  lm.save(dir / "lm.json");
  const auto back = lm::NGramLm::load(dir / "lm.json");
  for (const auto& e : synth(7, 10).examples) EXPECT_EQ(back.perplexity(e.sentence), lm.perplexity(e.sentence));
  EXPECT_THROW(lm::NGramLm::load(dir / "missing.json"), DataError);
}

TEST(CountingScorer, CountsSentences) {
  const auto lm = toy_lm();
  lm::CountingScorer c(lm);
  c.perplexity(words("a"));
  std::vector<text::Sentence> batch{words("a"), words("b"), words("a b")};
  const auto out = c.perplexities(batch);
  EXPECT_EQ(c.calls(), 4u);
  EXPECT_NEAR(out[2], std::pow(2.0, 5.0 / 3.0), 1e-12);
  c.reset();
  EXPECT_EQ(c.calls(), 0u);
}
