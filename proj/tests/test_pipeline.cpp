#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "onion/errors.hpp"
#include "onion/pipeline.hpp"
#include "support.hpp"

using namespace onion;
using namespace onion::pipeline;
using nlohmann::json;

namespace {

// Small enough to run in well under a second.
PipelineConfig small_config(std::uint64_t seed) {
  auto c = default_config(seed);
  c.data.synth.per_class = 120;
  c.data.validation_per_class = 20;
  c.data.test_per_class = 40;
  c.train.epochs = 60;
  c.fine_tune.epochs = 5;
  c.sweep_points = 4;
  return c;
}

std::map<std::string, std::string> bundle_files(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out[e.path().filename().string()] = read_text(e.path());
  return out;
}

}  // namespace

TEST(Names, ScenarioAndMethod) {
  for (auto s : {Scenario::post_training, Scenario::pre_training, Scenario::fine_tune_clean}) {
    EXPECT_EQ(parse_scenario(to_string(s)), s);
  }
  for (auto m : {Method::onion, Method::pso, Method::ga}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_scenario("mid_training"), UsageError);
  EXPECT_THROW(parse_method("bert"), UsageError);
}

TEST(Config, DerivedSeedsAreDistinctAndStable) {
  const auto a = default_config(7);
  const auto b = default_config(7);
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  const std::set<std::uint64_t> seeds{a.data.train_seed,  a.data.validation_seed, a.data.test_seed,
                                      a.attack.plan.seed, a.test_poison_seed,     a.train.seed,
                                      a.fine_tune.seed,   a.defense.pso.seed,     a.defense.ga.seed};
  EXPECT_EQ(seeds.size(), 9u);
  EXPECT_NE(default_config(8).data.train_seed, a.data.train_seed);
}

TEST(Config, JsonRoundTrip) {
  auto c = small_config(3);
  c.defense.threshold.reset();
  c.defense.method = Method::ga;
  c.sweep_grid = {0.0, 1.5, 3.0};
  c.scenario = Scenario::fine_tune_clean;
  const auto j = config_to_json(c);
  EXPECT_EQ(j.at("defense").at("threshold"), "auto");
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  // A manifest is accepted in place of a bare config.
  EXPECT_EQ(config_to_json(config_from_json(json{{"config", j}, {"tool_version", kToolVersion}})), j);
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = config_from_json(json{{"seed", 11}, {"defense", {{"threshold", 2.5}}}});
  const auto d = default_config(11);
  EXPECT_EQ(c.data.train_seed, d.data.train_seed);
  EXPECT_EQ(c.attack.plan.seed, d.attack.plan.seed);
  EXPECT_EQ(*c.defense.threshold, 2.5);
  EXPECT_EQ(c.train.epochs, d.train.epochs);
}

TEST(Config, BadValuesAreUsageErrors) {
  EXPECT_THROW(config_from_json(json{{"scenario", "sideways"}}), UsageError);
  EXPECT_THROW(config_from_json(json{{"defense", {{"threshold", "soon"}}}}), UsageError);
  EXPECT_THROW(config_from_json(json{{"data", {{"per_class", "lots"}}}}), UsageError);
  EXPECT_THROW(config_from_json(json{{"defense", {{"method", "lstm"}}}}), UsageError);
}

TEST(Prepare, SplitsAndModels) {
  const auto cfg = small_config(4);
  const auto wb = prepare(cfg);
  EXPECT_EQ(wb.clean_train.size(), 240u);
  EXPECT_EQ(wb.validation.size(), 40u);
  EXPECT_EQ(wb.clean_test.size(), 80u);
  EXPECT_FALSE(wb.clean_train.has_poisoned());
  EXPECT_EQ(wb.poisoned_test.size(), 40u);
  EXPECT_EQ(std::count_if(wb.poisoned_train.examples.begin(), wb.poisoned_train.examples.end(),
                          [](const auto& e) { return e.poisoned; }),
            24);
  EXPECT_FALSE(wb.attack.plan.spec.trigger_words.empty());
  EXPECT_EQ(wb.victim, wb.backdoored);
}

TEST(Prepare, FineTuneScenarioChangesVictim) {
  auto cfg = small_config(4);
  cfg.scenario = Scenario::fine_tune_clean;
  const auto wb = prepare(cfg);
  EXPECT_NE(wb.victim, wb.backdoored);
}

TEST(Prepare, StageNamedInErrors) {
  auto cfg = small_config(1);
  cfg.data.train_path = "/nonexistent/train.tsv";
  cfg.data.test_path = "/nonexistent/test.tsv";
  try {
    prepare(cfg);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("stage data: ", 0), 0u) << e.what();
  }
  auto bad_lm = small_config(1);
  bad_lm.lm.source = "/nonexistent/lm.json";
  try {
    prepare(bad_lm);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("stage lm: "), std::string::npos) << e.what();
  }
}

TEST(Prepare, ReadsTsvFiles) {
  const auto dir = testkit::scratch_dir("pipeline_tsv");
  auto synth_cfg = small_config(5);
  const auto wb = prepare(synth_cfg);
  text::write_tsv(wb.clean_train, dir / "train.tsv");
  text::write_tsv(wb.clean_test, dir / "test.tsv");
  auto cfg = synth_cfg;
  cfg.data.train_path = (dir / "train.tsv").string();
  cfg.data.test_path = (dir / "test.tsv").string();
  const auto wb2 = prepare(cfg);
  EXPECT_EQ(wb2.clean_train.size(), wb.clean_train.size());
  EXPECT_TRUE(wb2.validation.empty());
  EXPECT_EQ(wb2.backdoored, wb.backdoored);
}

TEST(Experiment, ReportShape) {
  const auto r = run_experiment(small_config(6));
  EXPECT_EQ(r.report.delta_asr, r.report.asr_before - r.report.asr_after);
  EXPECT_EQ(r.breakdown_asr.total_count(), r.report.poisoned_count);
  EXPECT_EQ(r.breakdown_cacc.total_count(), r.report.clean_count);
  EXPECT_EQ(r.sweep.size(), 4u);
  EXPECT_EQ(r.sweep.front().threshold, 0.0);
  EXPECT_TRUE(r.benign_cacc.has_value());
  EXPECT_GT(r.scorer_calls, 0u);
  const auto j = report_json(r);
  EXPECT_EQ(j.at("method"), "onion");
  EXPECT_EQ(j.at("trigger_words").size(), 1u);
}

TEST(Experiment, AutoThresholdIsTuned) {
  auto cfg = small_config(6);
  cfg.defense.threshold.reset();
  const auto r = run_experiment(cfg);
  ASSERT_TRUE(r.tuning.has_value());
  EXPECT_EQ(r.threshold, r.tuning->threshold);
  EXPECT_GE(r.tuning->tuned_cacc, r.tuning->base_cacc - cfg.defense.max_cacc_drop / 100.0 - 1e-12);
}

TEST(Experiment, ParallelMatchesSerial) {
  const auto cfg = small_config(9);
  EXPECT_EQ(report_json(run_experiment(cfg, Exec::serial)), report_json(run_experiment(cfg, Exec::parallel)));
}

TEST(Bundle, ManifestReproducesByteIdenticalOutputs) {
  const auto dir = testkit::scratch_dir("pipeline_bundle");
  auto cfg = small_config(10);
  cfg.defense.threshold.reset();
  write_bundle(run_experiment(cfg), cfg, dir / "a");
  const auto manifest = read_json(dir / "a" / "manifest.json");
  for (const auto& name : {"report.json", "breakdown_asr.csv", "breakdown_cacc.csv", "score_dist.csv", "sweep.csv"}) {
    EXPECT_TRUE(manifest.at("outputs").contains(name)) << name;
    EXPECT_EQ(manifest.at("outputs").at(name), fnv_hex(read_text(dir / "a" / name)));
  }
  EXPECT_EQ(manifest.at("config_hash"), fnv_hex(manifest.at("config").dump()));

  const auto replay = config_from_json(manifest);
  write_bundle(run_experiment(replay), replay, dir / "b");
  EXPECT_EQ(bundle_files(dir / "a"), bundle_files(dir / "b"));
}

TEST(Files, HashAndIo) {
  EXPECT_EQ(fnv_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv_hex("a"), "af63dc4c8601ec8c");
  const auto dir = testkit::scratch_dir("pipeline_io");
  write_text(dir / "x.txt", "hello\n");
  EXPECT_EQ(read_text(dir / "x.txt"), "hello\n");
  EXPECT_THROW(read_text(dir / "missing.txt"), DataError);
  write_text(dir / "bad.json", "{not json");
  EXPECT_THROW(read_json(dir / "bad.json"), DataError);
}
