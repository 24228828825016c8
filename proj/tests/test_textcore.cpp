#include <gtest/gtest.h>

#include <fstream>

#include "onion/errors.hpp"
#include "onion/textcore.hpp"
#include "support.hpp"

using namespace onion;
using namespace onion::text;

namespace {

std::vector<std::string> texts_of(const Sentence& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tokens) out.push_back(t.text());
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

}  // namespace

TEST(Tokenize, PaperExampleSentence) {
  EXPECT_EQ(texts_of(tokenize("I really love cf this 3D movie.")),
            (std::vector<std::string>{"i", "really", "love", "cf", "this", "3d", "movie", "."}));
}

TEST(Tokenize, EmptyAndWhitespace) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t ").empty());
  EXPECT_EQ(texts_of(tokenize("A  B")), (std::vector<std::string>{"a", "b"}));
}

TEST(Tokenize, SplitsLeadingAndTrailingPunctuation) {
  EXPECT_EQ(texts_of(tokenize("(hello), don't!")),
            (std::vector<std::string>{"(", "hello", ")", ",", "don't", "!"}));
  EXPECT_EQ(texts_of(tokenize("...")), (std::vector<std::string>{".", ".", "."}));
}

TEST(Tokenize, RoundTripOnRandomStrings) {
  const std::string alphabet = "abcXYZ019 .,!?'\"()-\t";
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string raw;
    const auto len = rng.uniform_index(40);
    for (std::size_t i = 0; i < len; ++i) raw.push_back(alphabet[rng.uniform_index(alphabet.size())]);
    const auto once = tokenize(raw);
    EXPECT_EQ(tokenize(detokenize(once)), once) << "input: " << raw;
    for (const auto& t : once.tokens) {
      EXPECT_FALSE(t.text().empty());
      EXPECT_EQ(t.text().find_first_of(" \t\n"), std::string::npos);
    }
  }
}

TEST(Token, RejectsWhitespaceAndEmpty) {
  EXPECT_THROW(Token(""), UsageError);
  EXPECT_THROW(Token("a b"), UsageError);
  EXPECT_EQ(Token("MiXeD").text(), "mixed");
}

TEST(Sentence, WithoutRemovesOneIndex) {
  const auto s = testkit::words("a b c");
  EXPECT_EQ(s.without(1), testkit::words("a c"));
  EXPECT_EQ(s.without(0).join(), "b c");
}

TEST(LoadTsv, ParsesLinesInOrder) {
  const auto dir = testkit::scratch_dir("tsv_ok");
  write_file(dir / "d.tsv", "good movie\t1\nbad movie\t0\n");
  const auto d = load_tsv(dir / "d.tsv", 2);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.examples[0].label, 1);
  EXPECT_EQ(d.examples[1].label, 0);
  EXPECT_EQ(d.examples[0].sentence, testkit::words("good movie"));
  EXPECT_FALSE(d.has_poisoned());
}

TEST(LoadTsv, LabelOutOfRangeNamesLine) {
  const auto dir = testkit::scratch_dir("tsv_range");
  write_file(dir / "d.tsv", "oops\t7\n");
  try {
    load_tsv(dir / "d.tsv", 2);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("label out of range at line 1"), std::string::npos) << e.what();
  }
}

TEST(LoadTsv, MalformedLinesNameLine) {
  const auto dir = testkit::scratch_dir("tsv_bad");
  write_file(dir / "a.tsv", "fine\t0\nno tab here\n");
  write_file(dir / "b.tsv", "fine\t0\n\nbad\tx\n");
  try {
    load_tsv(dir / "a.tsv", 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  try {
    load_tsv(dir / "b.tsv", 2);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadTsv, EmptyFileAndMissingFile) {
  const auto dir = testkit::scratch_dir("tsv_empty");
  write_file(dir / "e.tsv", "");
  EXPECT_EQ(load_tsv(dir / "e.tsv", 2).size(), 0u);
  EXPECT_THROW(load_tsv(dir / "missing.tsv", 2), DataError);
}

TEST(LoadTsv, WriteThenLoadRoundTrips) {
  Rng rng(3);
  const auto d = synth_corpus(rng, SynthParams{3, 10, 6, 2, 7});
  const auto dir = testkit::scratch_dir("tsv_rt");
  write_tsv(d, dir / "d.tsv");
  EXPECT_EQ(load_tsv(dir / "d.tsv", 3), d);
}

TEST(Synth, CountsAndLabels) {
  Rng rng(1);
  const auto d = synth_corpus(rng, SynthParams{2, 100, 20, 8, 16});
  ASSERT_EQ(d.size(), 200u);
  int ones = 0;
  for (const auto& e : d.examples) {
    ones += e.label;
    EXPECT_GE(e.sentence.size(), 8u);
    EXPECT_LE(e.sentence.size(), 16u);
  }
  EXPECT_EQ(ones, 100);

  Rng rng4(2);
  for (const auto& e : synth_corpus(rng4, SynthParams{4, 5, 5, 1, 3}).examples) {
    EXPECT_GE(e.label, 0);
    EXPECT_LT(e.label, 4);
  }
}

TEST(Synth, DeterministicUnderSeed) {
  Rng a(99), b(99), c(100);
  const SynthParams p{2, 50, 20, 4, 9};
  const auto da = synth_corpus(a, p);
  EXPECT_EQ(da, synth_corpus(b, p));
  EXPECT_NE(da, synth_corpus(c, p));
}

TEST(Synth, EverySentenceHasAClassWord) {
  Rng rng(5);
  const SynthParams p{2, 200, 10, 1, 4};
  for (const auto& e : synth_corpus(rng, p).examples) {
    bool found = false;
    for (int j = 0; j < p.vocab_per_class; ++j) {
      for (const auto& t : e.sentence.tokens) found = found || t.text() == synth_class_word(e.label, j);
    }
    EXPECT_TRUE(found);
  }
}

TEST(Synth, RejectsBadParameters) {
  Rng rng(1);
  EXPECT_THROW(synth_corpus(rng, SynthParams{2, 0, 20, 1, 2}), UsageError);
  EXPECT_THROW(synth_corpus(rng, SynthParams{2, 5, 4, 1, 2}), UsageError);
  EXPECT_THROW(synth_corpus(rng, SynthParams{2, 5, 5, 3, 2}), UsageError);
}

TEST(FrequencyTable, CountsAndOrdering) {
  const auto d = testkit::dataset_of({{"a a b", 0}}, Split::train);
  const auto f = frequency_table(d);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].token.text(), "a");
  EXPECT_EQ(f[0].count, 2u);
  EXPECT_EQ(f[1].count, 1u);

  const auto twice = frequency_table(testkit::dataset_of({{"a a b", 0}, {"a a b", 1}}, Split::train));
  EXPECT_EQ(twice[0].count, 4u);
  EXPECT_EQ(twice[1].count, 2u);
}

TEST(FrequencyTable, TiesByTextAndTotalMass) {
  Rng rng(8);
  const auto d = synth_corpus(rng, SynthParams{2, 30, 5, 3, 8});
  const auto f = frequency_table(d);
  std::uint64_t total = 0, tokens = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    total += f[i].count;
    if (i > 0) {
      EXPECT_TRUE(f[i - 1].count > f[i].count ||
                  (f[i - 1].count == f[i].count && f[i - 1].token.text() < f[i].token.text()));
    }
  }
  for (const auto& e : d.examples) tokens += e.sentence.size();
  EXPECT_EQ(total, tokens);
  EXPECT_THROW(frequency_table(Dataset{}), DataError);
}

TEST(Rng, SameSeedSameStreamAndChildIndependence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng base(7);
  const auto c1 = base.child(1).seed();
  EXPECT_EQ(c1, Rng(7).child(1).seed());
  EXPECT_NE(c1, base.child(2).seed());
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform01();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    EXPECT_LT(u.uniform_index(7), 7u);
  }
}

TEST(Rng, WeightedIndexNeverPicksZeroWeight) {
  Rng rng(4);
  const std::vector<double> w{0.0, 1.0, 0.0, 3.0};
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4000; ++i) ++counts[rng.weighted_index(w)];
  EXPECT_EQ(counts[0], 0);
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[3] / 4000.0, 0.75, 0.03);
}
