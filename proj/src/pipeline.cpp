#include "onion/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "onion/errors.hpp"
#include "onion/kernels.hpp"
#include "onion/remote.hpp"

namespace onion::pipeline {

using nlohmann::json;
using text::Dataset;

namespace {

enum SeedStream : std::uint64_t {
  kTrainData = 1,
  kValidationData,
  kTestData,
  kPoison,
  kTestPoison,
  kTraining,
  kFineTune,
  kPso,
  kGa,
};

std::uint64_t sub_seed(std::uint64_t seed, SeedStream s) { return Rng::derive_seed(seed, s); }

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Dataset synth_split(const DataConfig& d, int per_class, std::uint64_t seed, text::Split split) {
  auto params = d.synth;
  params.per_class = per_class;
  Rng rng(seed);
  return text::synth_corpus(rng, params, split);
}

// Prefixes errors with the pipeline stage that raised them, keeping the type.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  const auto prefix = std::string("stage ") + name + ": ";
  try {
    return f();
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  }
}

}  // namespace

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::post_training: return "post_training";
    case Scenario::pre_training: return "pre_training";
    case Scenario::fine_tune_clean: return "fine_tune_clean";
  }
  return "post_training";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "post_training") return Scenario::post_training;
  if (name == "pre_training") return Scenario::pre_training;
  if (name == "fine_tune_clean") return Scenario::fine_tune_clean;
  throw UsageError("unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::onion: return "onion";
    case Method::pso: return "pso";
    case Method::ga: return "ga";
  }
  return "onion";
}

Method parse_method(std::string_view name) {
  if (name == "onion") return Method::onion;
  if (name == "pso") return Method::pso;
  if (name == "ga") return Method::ga;
  throw UsageError("unknown defense method '" + std::string(name) + "'");
}

PipelineConfig default_config(std::uint64_t seed) {
  PipelineConfig c;
  c.seed = seed;
  c.data.train_seed = sub_seed(seed, kTrainData);
  c.data.validation_seed = sub_seed(seed, kValidationData);
  c.data.test_seed = sub_seed(seed, kTestData);
  c.attack.plan.seed = sub_seed(seed, kPoison);
  c.attack.plan.spec.trigger_sentence = attack::default_trigger_sentence();
  c.test_poison_seed = sub_seed(seed, kTestPoison);
  c.train.seed = sub_seed(seed, kTraining);
  c.train.epochs = 400;
  c.train.learning_rate = 4.0;
  c.fine_tune = c.train;
  c.fine_tune.seed = sub_seed(seed, kFineTune);
  c.fine_tune.epochs = 20;
  c.fine_tune.learning_rate = 0.4;
  c.defense.pso.seed = sub_seed(seed, kPso);
  c.defense.ga.seed = sub_seed(seed, kGa);
  return c;
}

PipelineConfig config_from_json(const json& input) {
  const json& j = input.contains("config") && input.at("config").is_object() ? input.at("config") : input;
  if (!j.is_object()) throw UsageError("pipeline config must be a JSON object");
  try {
    PipelineConfig c = default_config(j.value("seed", std::uint64_t{0}));
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());

    if (j.contains("data")) {
      const auto& d = j.at("data");
      maybe(d, "num_classes", c.data.synth.num_classes);
      maybe(d, "per_class", c.data.synth.per_class);
      maybe(d, "vocab_per_class", c.data.synth.vocab_per_class);
      maybe(d, "min_len", c.data.synth.min_len);
      maybe(d, "max_len", c.data.synth.max_len);
      maybe(d, "class_word_rate", c.data.synth.class_word_rate);
      maybe(d, "validation_per_class", c.data.validation_per_class);
      maybe(d, "test_per_class", c.data.test_per_class);
      maybe(d, "train_seed", c.data.train_seed);
      maybe(d, "validation_seed", c.data.validation_seed);
      maybe(d, "test_seed", c.data.test_seed);
      maybe(d, "train", c.data.train_path);
      maybe(d, "validation", c.data.validation_path);
      maybe(d, "test", c.data.test_path);
      c.data.num_classes = c.data.synth.num_classes;
    }

    const auto poison_seed = c.attack.plan.seed;
    c.attack = attack::plan_from_json(j.value("attack", json::object()));
    if (!j.contains("attack") || !j.at("attack").contains("seed")) c.attack.plan.seed = poison_seed;
    maybe(j, "test_poison_seed", c.test_poison_seed);

    if (j.contains("train")) c.train = victim::train_config_from_json(j.at("train"), c.train);
    if (j.contains("fine_tune")) c.fine_tune = victim::train_config_from_json(j.at("fine_tune"), c.fine_tune);
    c.fine_tune.feature_dim = c.train.feature_dim;

    if (j.contains("lm")) {
      const auto& l = j.at("lm");
      maybe(l, "order", c.lm.options.order);
      maybe(l, "weights", c.lm.options.weights);
      maybe(l, "unk_cutoff", c.lm.options.unk_cutoff);
      maybe(l, "source", c.lm.source);
    }

    if (j.contains("defense")) {
      const auto& d = j.at("defense");
      if (d.contains("method")) c.defense.method = parse_method(d.at("method").get<std::string>());
      if (d.contains("threshold")) {
        const auto& t = d.at("threshold");
        if (t.is_string()) {
          if (t.get<std::string>() != "auto") throw UsageError("defense.threshold must be a number or \"auto\"");
          c.defense.threshold.reset();
        } else {
          c.defense.threshold = t.get<double>();
        }
      }
      maybe(d, "max_cacc_drop", c.defense.max_cacc_drop);
      if (d.contains("pso")) c.defense.pso = search::pso_config_from_json(d.at("pso"), c.defense.pso);
      if (d.contains("ga")) c.defense.ga = search::ga_config_from_json(d.at("ga"), c.defense.ga);
    }

    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      maybe(s, "grid", c.sweep_grid);
      maybe(s, "points", c.sweep_points);
    }
    maybe(j, "score_bin_width", c.score_bin_width);
    if (c.sweep_points < 1) throw UsageError("sweep.points must be >= 1");
    return c;
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid pipeline config: ") + e.what());
  }
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenario"] = std::string(to_string(c.scenario));
  json d;
  d["num_classes"] = c.data.synth.num_classes;
  d["per_class"] = c.data.synth.per_class;
  d["vocab_per_class"] = c.data.synth.vocab_per_class;
  d["min_len"] = c.data.synth.min_len;
  d["max_len"] = c.data.synth.max_len;
  d["class_word_rate"] = c.data.synth.class_word_rate;
  d["validation_per_class"] = c.data.validation_per_class;
  d["test_per_class"] = c.data.test_per_class;
  d["train_seed"] = c.data.train_seed;
  d["validation_seed"] = c.data.validation_seed;
  d["test_seed"] = c.data.test_seed;
  if (!c.data.train_path.empty()) d["train"] = c.data.train_path;
  if (!c.data.validation_path.empty()) d["validation"] = c.data.validation_path;
  if (!c.data.test_path.empty()) d["test"] = c.data.test_path;
  j["data"] = d;
  j["attack"] = attack::plan_to_json(c.attack);
  j["test_poison_seed"] = c.test_poison_seed;
  j["train"] = victim::train_config_to_json(c.train);
  j["fine_tune"] = victim::train_config_to_json(c.fine_tune);
  j["lm"] = {{"order", c.lm.options.order}, {"weights", c.lm.options.weights}, {"unk_cutoff", c.lm.options.unk_cutoff}};
  if (!c.lm.source.empty()) j["lm"]["source"] = c.lm.source;
  json def;
  def["method"] = std::string(to_string(c.defense.method));
  if (c.defense.threshold) {
    def["threshold"] = *c.defense.threshold;
  } else {
    def["threshold"] = "auto";
  }
  def["max_cacc_drop"] = c.defense.max_cacc_drop;
  def["pso"] = search::to_json(c.defense.pso);
  def["ga"] = search::to_json(c.defense.ga);
  j["defense"] = def;
  j["sweep"] = {{"points", c.sweep_points}};
  if (!c.sweep_grid.empty()) j["sweep"]["grid"] = c.sweep_grid;
  j["score_bin_width"] = c.score_bin_width;
  return j;
}

Workbench prepare(const PipelineConfig& cfg) {
  Workbench wb;
  const auto& dc = cfg.data;
  stage("data", [&] {
    if (dc.train_path.empty()) {
      wb.clean_train = synth_split(dc, dc.synth.per_class, dc.train_seed, text::Split::train);
      wb.validation = synth_split(dc, dc.validation_per_class, dc.validation_seed, text::Split::validation);
      wb.clean_test = synth_split(dc, dc.test_per_class, dc.test_seed, text::Split::test);
      return;
    }
    if (dc.test_path.empty()) throw UsageError("data.test is required when data.train is a file");
    wb.clean_train = text::load_tsv(dc.train_path, dc.num_classes, text::Split::train);
    wb.clean_test = text::load_tsv(dc.test_path, dc.num_classes, text::Split::test);
    wb.validation.num_classes = dc.num_classes;
    wb.validation.split = text::Split::validation;
    if (!dc.validation_path.empty()) {
      wb.validation = text::load_tsv(dc.validation_path, dc.num_classes, text::Split::validation);
    }
  });

  stage("poison", [&] {
    wb.attack = cfg.attack;
    attack::resolve_triggers(wb.attack, wb.clean_train);
    wb.poisoned_train = attack::poison_dataset(wb.clean_train, wb.attack.plan);
    wb.poisoned_test = attack::poison_test_set(wb.clean_test, wb.attack.plan.spec, cfg.test_poison_seed);
  });

  stage("train", [&] {
    wb.benign = victim::train(wb.clean_train, cfg.train);
    wb.backdoored = victim::train(wb.poisoned_train, cfg.train);
  });
  wb.victim = wb.backdoored;
  if (cfg.scenario == Scenario::fine_tune_clean) {
    stage("fine-tune", [&] { wb.victim = victim::fine_tune(wb.backdoored, wb.clean_train, cfg.fine_tune); });
  }

  stage("lm", [&] {
    if (cfg.lm.source.empty()) {
      wb.scorer = std::make_unique<lm::NGramLm>(lm::NGramLm::train(wb.clean_train, cfg.lm.options));
    } else {
      wb.scorer = lm::open_scorer(cfg.lm.source);
    }
  });
  return wb;
}

ResolvedDefense resolve_defense(const DefenseConfig& cfg, const lm::PerplexityScorer& scorer,
                                const victim::TextClassifier& model, const Dataset& validation, Exec exec) {
  ResolvedDefense out;
  switch (cfg.method) {
    case Method::onion:
      if (cfg.threshold) {
        out.threshold = *cfg.threshold;
      } else {
        if (validation.empty()) throw UsageError("automatic threshold needs a validation split");
        out.tuning = defense::tune_threshold(scorer, model, validation, cfg.max_cacc_drop, exec);
        out.threshold = out.tuning->threshold;
      }
      out.sanitizer = defense::onion_sanitizer(scorer, out.threshold);
      break;
    case Method::pso:
      out.sanitizer = search::pso_sanitizer(scorer, cfg.pso);
      break;
    case Method::ga:
      out.sanitizer = search::ga_sanitizer(scorer, cfg.ga);
      break;
  }
  return out;
}

std::vector<double> auto_grid(const lm::PerplexityScorer& scorer, const Dataset& poisoned, const Dataset& clean,
                              int points, Exec exec) {
  if (points < 1) throw UsageError("auto_grid: need at least one point");
  double hi = 0.0;
  for (const Dataset* d : {&poisoned, &clean}) {
    for (const auto& p : kernels::profiles(scorer, kernels::sentences_of(*d), exec)) {
      for (const auto& t : p.per_token) {
        if (std::isfinite(t.score)) hi = std::max(hi, t.score);
      }
    }
  }
  if (points == 1) return {hi};
  std::vector<double> grid;
  for (int k = 0; k < points; ++k) grid.push_back(hi * k / (points - 1));
  return grid;
}

ExperimentResult evaluate_defense(const victim::TextClassifier& model, const lm::PerplexityScorer& scorer,
                                  const Dataset& poisoned_test, const Dataset& clean_test, const Dataset& validation,
                                  const PipelineConfig& cfg, Exec exec) {
  ExperimentResult r;
  r.scenario = cfg.scenario;
  r.method = cfg.defense.method;
  lm::CountingScorer counting(scorer);
  const auto def = stage("defend", [&] { return resolve_defense(cfg.defense, counting, model, validation, exec); });
  r.threshold = def.threshold;
  r.tuning = def.tuning;
  counting.reset();
  std::vector<eval::Outcome> poisoned, clean;
  stage("defend", [&] {
    poisoned = eval::run_defense(model, def.sanitizer, poisoned_test, exec);
    clean = eval::run_defense(model, def.sanitizer, clean_test, exec);
  });
  r.scorer_calls = counting.calls();
  r.report = eval::make_report(poisoned, clean);
  r.breakdown_asr = eval::breakdown_asr(poisoned);
  r.breakdown_cacc = eval::breakdown_cacc(clean);

  stage("evaluate", [&] {
    r.scores = eval::score_distribution(scorer, poisoned_test, cfg.score_bin_width, exec);
    const auto grid = cfg.sweep_grid.empty() ? auto_grid(scorer, poisoned_test, clean_test, cfg.sweep_points, exec)
                                             : cfg.sweep_grid;
    r.sweep = eval::sweep_threshold(model, scorer, poisoned_test, clean_test, grid, exec);
  });
  r.backdoored_asr = r.report.asr_before;
  r.backdoored_cacc = r.report.cacc_before;
  return r;
}

ExperimentResult evaluate(const Workbench& wb, const PipelineConfig& cfg, Exec exec) {
  auto r = evaluate_defense(wb.victim, *wb.scorer, wb.poisoned_test, wb.clean_test, wb.validation, cfg, exec);
  for (const auto& t : wb.attack.plan.spec.trigger_words) r.trigger_words.push_back(t.text());
  r.benign_cacc = eval::cacc(wb.benign, wb.clean_test, exec);
  return r;
}

ExperimentResult run_experiment(const PipelineConfig& cfg, Exec exec) { return evaluate(prepare(cfg), cfg, exec); }

json report_json(const ExperimentResult& r) {
  json j;
  j["scenario"] = std::string(to_string(r.scenario));
  j["method"] = std::string(to_string(r.method));
  j["trigger_words"] = r.trigger_words;
  if (r.benign_cacc) j["benign_cacc"] = *r.benign_cacc;
  j["backdoored_asr"] = r.backdoored_asr;
  j["backdoored_cacc"] = r.backdoored_cacc;
  if (r.method == Method::onion) j["threshold"] = r.threshold;
  if (r.tuning) {
    j["tuning"] = {{"threshold", r.tuning->threshold},
                   {"fallback", r.tuning->fallback},
                   {"base_cacc", r.tuning->base_cacc},
                   {"tuned_cacc", r.tuning->tuned_cacc},
                   {"candidates", r.tuning->candidates}};
  }
  j["defense"] = eval::to_json(r.report);
  j["scorer_calls"] = r.scorer_calls;
  j["score_medians"] = {{"trigger", r.scores.trigger_median()}, {"normal", r.scores.normal_median()}};
  return j;
}

std::string fnv_hex(std::string_view bytes) {
  std::uint64_t h = victim::fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& path) {
  const auto body = read_text(path);
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_bundle(const ExperimentResult& r, const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("report.json", report_json(r).dump(2) + "\n");
  files.emplace_back("breakdown_asr.csv", r.breakdown_asr.to_csv());
  files.emplace_back("breakdown_cacc.csv", r.breakdown_cacc.to_csv());
  files.emplace_back("score_dist.csv", r.scores.to_csv());
  files.emplace_back("sweep.csv", eval::sweep_to_csv(r.sweep));

  std::ostringstream txt;
  const auto& rep = r.report;
  txt << "scenario " << to_string(r.scenario) << ", defense " << to_string(r.method) << "\n"
      << "ASR   " << eval::format_number(rep.asr_before) << " -> " << eval::format_number(rep.asr_after)
      << "  (delta " << eval::format_number(rep.delta_asr) << ")\n"
      << "CACC  " << eval::format_number(rep.cacc_before) << " -> " << eval::format_number(rep.cacc_after)
      << "  (delta " << eval::format_number(rep.delta_cacc) << ")\n"
      << "trigger detection precision " << eval::format_number(rep.detect_precision) << ", recall "
      << eval::format_number(rep.detect_recall) << "\n\n"
      << r.breakdown_asr.to_text() << "\n"
      << r.breakdown_cacc.to_text();
  files.emplace_back("report.txt", txt.str());

  json manifest;
  manifest["tool_version"] = kToolVersion;
  const auto config = config_to_json(cfg);
  manifest["config"] = config;
  manifest["config_hash"] = fnv_hex(config.dump());
  manifest["seeds"] = {{"seed", cfg.seed},
                       {"train_data", cfg.data.train_seed},
                       {"validation_data", cfg.data.validation_seed},
                       {"test_data", cfg.data.test_seed},
                       {"poison", cfg.attack.plan.seed},
                       {"test_poison", cfg.test_poison_seed},
                       {"training", cfg.train.seed},
                       {"fine_tune", cfg.fine_tune.seed},
                       {"pso", cfg.defense.pso.seed},
                       {"ga", cfg.defense.ga.seed}};
  manifest["outputs"] = json::object();
  for (const auto& [name, body] : files) {
    write_text(out_dir / name, body);
    manifest["outputs"][name] = fnv_hex(body);
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace onion::pipeline
