#include "onion/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "onion/attack.hpp"
#include "onion/errors.hpp"
#include "onion/evalx.hpp"
#include "onion/kernels.hpp"
#include "onion/lm.hpp"
#include "onion/pipeline.hpp"
#include "onion/remote.hpp"
#include "onion/searchopt.hpp"
#include "onion/victim.hpp"

namespace onion::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using pipeline::PipelineConfig;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

// Seeds a config may pin explicitly; --seed drops them so they are derived
// again from the new top-level seed.
void forget_derived_seeds(json& j) {
  auto drop = [&](std::initializer_list<const char*> path) {
    json* node = &j;
    const char* last = nullptr;
    for (const char* key : path) {
      if (last) {
        if (!node->contains(last) || !(*node)[last].is_object()) return;
        node = &(*node)[last];
      }
      last = key;
    }
    node->erase(last);
  };
  drop({"data", "train_seed"});
  drop({"data", "validation_seed"});
  drop({"data", "test_seed"});
  drop({"attack", "seed"});
  drop({"test_poison_seed"});
  drop({"train", "seed"});
  drop({"fine_tune", "seed"});
  drop({"defense", "pso", "seed"});
  drop({"defense", "ga", "seed"});
}

json config_json(const Globals& g) {
  json j = json::object();
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw DataError("config file not found: " + g.config);
    j = pipeline::read_json(g.config);
    if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
    if (!j.is_object()) throw UsageError("config must be a JSON object: " + g.config);
  }
  if (g.seed_set) {
    forget_derived_seeds(j);
    j["seed"] = g.seed;
  }
  return j;
}

PipelineConfig load_config(const Globals& g) { return pipeline::config_from_json(config_json(g)); }

fs::path output_path(const Globals& g, const std::string& explicit_path, const std::string& default_name) {
  fs::path p = explicit_path.empty() ? fs::path(g.out_dir.empty() ? "." : g.out_dir) / default_name
                                     : fs::path(explicit_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing --") + what);
  if (!fs::exists(path)) throw DataError(std::string("file not found: ") + path);
}

std::optional<double> parse_threshold(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("threshold must be a number or 'auto', got '" + s + "'");
  }
}

std::unique_ptr<lm::PerplexityScorer> open_lm(const std::string& source) {
  if (source.empty()) throw UsageError("missing --lm");
  if (source.rfind("http://", 0) != 0 && source.rfind("https://", 0) != 0 && !fs::exists(source)) {
    throw DataError("file not found: " + source);
  }
  return lm::open_scorer(source);
}

victim::TextClassifier load_model(const std::string& path) {
  require_file(path, "model");
  return victim::TextClassifier::load(path);
}

text::Dataset load_data(const std::string& path, int classes, text::Split split, const char* flag) {
  require_file(path, flag);
  return text::load_tsv(path, classes, split);
}

// Flags shared by every command that runs a defense.
struct DefenseFlags {
  std::string method;
  std::string threshold;
  std::string validation;
  double max_cacc_drop = -1.0;
  std::string search_config;

  void add(CLI::App* cmd) {
    cmd->add_option("--method", method, "onion, pso or ga");
    cmd->add_option("--threshold", threshold, "ONION threshold t_s, or 'auto'");
    cmd->add_option("--validation", validation, "Validation TSV for --threshold auto");
    cmd->add_option("--max-cacc-drop", max_cacc_drop, "Allowed CACC drop in points when tuning");
    cmd->add_option("--search-config", search_config, "JSON with N, T, omega_max, omega_min, p_max, p_min, seed");
  }

  void apply(PipelineConfig& cfg) const {
    auto& d = cfg.defense;
    if (!method.empty()) d.method = pipeline::parse_method(method);
    if (!threshold.empty()) d.threshold = parse_threshold(threshold);
    if (max_cacc_drop >= 0.0) d.max_cacc_drop = max_cacc_drop;
    if (!search_config.empty()) {
      require_file(search_config, "search-config");
      const auto j = pipeline::read_json(search_config);
      d.pso = search::pso_config_from_json(j, d.pso);
      d.ga = search::ga_config_from_json(j, d.ga);
    }
  }
};

// ---------------------------------------------------------------------------

struct SynthOpts {
  std::string split = "train";
  int classes = 0;
  int per_class = 0;
  int vocab_per_class = 0;
  int min_len = 0;
  int max_len = 0;
  std::string out;
};

int cmd_synth(const Globals& g, const SynthOpts& o, std::ostream& out) {
  const auto cfg = load_config(g);
  const auto split = text::parse_split(o.split);
  auto params = cfg.data.synth;
  std::uint64_t seed = cfg.data.train_seed;
  if (split == text::Split::validation) {
    params.per_class = cfg.data.validation_per_class;
    seed = cfg.data.validation_seed;
  } else if (split == text::Split::test) {
    params.per_class = cfg.data.test_per_class;
    seed = cfg.data.test_seed;
  }
  if (o.classes) params.num_classes = o.classes;
  if (o.per_class) params.per_class = o.per_class;
  if (o.vocab_per_class) params.vocab_per_class = o.vocab_per_class;
  if (o.min_len) params.min_len = o.min_len;
  if (o.max_len) params.max_len = o.max_len;
  Rng rng(seed);
  const auto d = text::synth_corpus(rng, params, split);
  const auto path = output_path(g, o.out, std::string(text::to_string(split)) + ".tsv");
  text::write_tsv(d, path);
  out << "wrote " << d.size() << " examples to " << path.string() << "\n";
  return kOk;
}

struct PoisonOpts {
  std::string in;
  int classes = 2;
  std::string out;
  std::string truth;
  bool test_set = false;
  std::string kind;
  std::string tier;
  double rate = -1.0;
  int target = -1;
  int num_triggers = 0;
  std::vector<std::string> triggers;
  std::string triggers_from;
  std::string vocab;
};

int cmd_poison(const Globals& g, const PoisonOpts& o, std::ostream& out) {
  auto cfg = load_config(g);
  auto& plan = cfg.attack;
  if (!o.kind.empty()) {
    if (o.kind == "word_insertion") {
      plan.plan.spec.kind = attack::TriggerKind::word_insertion;
    } else if (o.kind == "sentence_insertion") {
      plan.plan.spec.kind = attack::TriggerKind::sentence_insertion;
    } else {
      throw UsageError("unknown trigger kind '" + o.kind + "'");
    }
  }
  if (!o.tier.empty()) plan.tier = attack::parse_tier(o.tier);
  if (o.rate >= 0.0) plan.plan.poison_rate = o.rate;
  if (o.target >= 0) plan.plan.spec.target_label = o.target;
  if (o.num_triggers > 0) plan.num_trigger_words = o.num_triggers;
  std::vector<std::string> words = o.triggers;
  if (!o.triggers_from.empty()) {
    require_file(o.triggers_from, "triggers-from");
    const auto truth = pipeline::read_json(o.triggers_from);
    for (const auto& w : truth.at("trigger_words")) words.push_back(w.get<std::string>());
  }
  if (!words.empty()) {
    plan.plan.spec.trigger_words.clear();
    for (const auto& w : words) plan.plan.spec.trigger_words.emplace_back(w);
    plan.explicit_words = true;
  }

  const auto split = o.test_set ? text::Split::test : text::Split::train;
  const auto d = load_data(o.in, o.classes, split, "in");
  const auto reference = o.vocab.empty() ? d : load_data(o.vocab, o.classes, text::Split::train, "vocab");
  attack::resolve_triggers(plan, reference);
  const auto poisoned = o.test_set ? attack::poison_test_set(d, plan.plan.spec, cfg.test_poison_seed)
                                   : attack::poison_dataset(d, plan.plan);

  const auto tsv = output_path(g, o.out, o.test_set ? "poisoned_test.tsv" : "poisoned_train.tsv");
  const auto truth = o.truth.empty() ? fs::path(tsv.string() + ".truth.json") : output_path(g, o.truth, "");
  text::write_tsv(poisoned, tsv);
  attack::write_ground_truth(poisoned, plan.plan.spec, truth);
  std::size_t n = 0;
  for (const auto& ex : poisoned.examples) n += ex.poisoned ? 1 : 0;
  out << "poisoned " << n << " of " << poisoned.size() << " examples; wrote " << tsv.string() << " and "
      << truth.string() << "\n";
  return kOk;
}

struct TrainOpts {
  std::string data;
  int classes = 2;
  std::string out;
  std::string init;
  int epochs = 0;
  double lr = -1.0;
  double l2 = -1.0;
  std::uint32_t feature_dim = 0;
};

int cmd_train(const Globals& g, const TrainOpts& o, std::ostream& out) {
  const auto cfg = load_config(g);
  const auto d = load_data(o.data, o.classes, text::Split::train, "data");
  auto tc = o.init.empty() ? cfg.train : cfg.fine_tune;
  if (o.epochs > 0) tc.epochs = o.epochs;
  if (o.lr >= 0.0) tc.learning_rate = o.lr;
  if (o.l2 >= 0.0) tc.l2 = o.l2;
  if (o.feature_dim > 0) tc.feature_dim = o.feature_dim;
  const auto model = o.init.empty() ? victim::train(d, tc) : victim::fine_tune(load_model(o.init), d, tc);
  const auto path = output_path(g, o.out, "model.json");
  model.save(path);
  out << "training accuracy " << eval::format_number(victim::accuracy(model, d)) << "; wrote " << path.string()
      << "\n";
  return kOk;
}

struct TrainLmOpts {
  std::string data;
  int classes = 2;
  int order = 0;
  std::string out;
};

int cmd_train_lm(const Globals& g, const TrainLmOpts& o, std::ostream& out) {
  const auto cfg = load_config(g);
  const auto d = load_data(o.data, o.classes, text::Split::train, "data");
  auto options = cfg.lm.options;
  if (o.order > 0) {
    options.order = o.order;
    if (static_cast<int>(options.weights.size()) != o.order) options.weights.assign(o.order, 1.0 / o.order);
  }
  const auto model = lm::NGramLm::train(d, options);
  const auto path = output_path(g, o.out, "lm.json");
  model.save(path);
  out << "vocabulary " << model.num_symbols() << " symbols; wrote " << path.string() << "\n";
  return kOk;
}

struct ServeOpts {
  std::string lm;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve_lm(const ServeOpts& o, std::ostream& out) {
  const auto scorer = open_lm(o.lm);
  lm::ScorerServer server(*scorer);
  out << "serving " << o.lm << " on " << o.host << ":" << o.port << std::endl;
  server.listen_blocking(o.host, o.port);
  return kOk;
}

struct TuneOpts {
  std::string model;
  std::string lm;
  std::string validation;
  int classes = 2;
  double max_cacc_drop = -1.0;
  std::string out;
};

json tune_json(const defense::TuneResult& t) {
  return {{"threshold", t.threshold},
          {"fallback", t.fallback},
          {"base_cacc", t.base_cacc},
          {"tuned_cacc", t.tuned_cacc},
          {"candidates", t.candidates}};
}

int cmd_tune(const Globals& g, const TuneOpts& o, std::ostream& out) {
  const auto cfg = load_config(g);
  const auto model = load_model(o.model);
  const auto scorer = open_lm(o.lm);
  const auto val = load_data(o.validation, o.classes, text::Split::validation, "validation");
  const double drop = o.max_cacc_drop >= 0.0 ? o.max_cacc_drop : cfg.defense.max_cacc_drop;
  const auto r = defense::tune_threshold(*scorer, model, val, drop);
  const auto body = tune_json(r).dump(2) + "\n";
  if (!o.out.empty() || !g.out_dir.empty()) pipeline::write_text(output_path(g, o.out, "threshold.json"), body);
  out << body;
  return kOk;
}

struct DefendOpts {
  std::string model;
  std::string lm;
  std::string in;
  std::string out;
  std::string sidecar;
  int classes = 2;
  DefenseFlags flags;
};

int cmd_defend(const Globals& g, const DefendOpts& o, std::ostream& out) {
  auto cfg = load_config(g);
  o.flags.apply(cfg);
  const auto scorer = open_lm(o.lm);
  const auto d = load_data(o.in, o.classes, text::Split::test, "in");
  text::Dataset val;
  victim::TextClassifier model(o.classes, 2);
  const bool tuning = cfg.defense.method == pipeline::Method::onion && !cfg.defense.threshold;
  if (tuning) {
    if (o.flags.validation.empty()) throw UsageError("--threshold auto requires --validation");
    model = load_model(o.model);
    val = load_data(o.flags.validation, o.classes, text::Split::validation, "validation");
  }
  const auto def = pipeline::resolve_defense(cfg.defense, *scorer, model, val);
  const auto results = kernels::apply(def.sanitizer, kernels::sentences_of(d), Exec::parallel);

  text::Dataset cleaned = d;
  json removed = json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    cleaned.examples[i] = text::LabeledExample{results[i].sentence, d.examples[i].label, false, {}};
    removed.push_back(results[i].removed);
  }
  const auto tsv = output_path(g, o.out, "defended.tsv");
  const auto side = o.sidecar.empty() ? fs::path(tsv.string() + ".removed.json") : output_path(g, o.sidecar, "");
  json meta = {{"method", std::string(pipeline::to_string(cfg.defense.method))}, {"removed", removed}};
  if (cfg.defense.method == pipeline::Method::onion) meta["threshold"] = def.threshold;
  if (def.tuning) meta["tuning"] = tune_json(*def.tuning);
  text::write_tsv(cleaned, tsv);
  pipeline::write_text(side, meta.dump(2) + "\n");
  out << "defended " << d.size() << " examples with " << pipeline::to_string(cfg.defense.method) << "; wrote "
      << tsv.string() << " and " << side.string() << "\n";
  return kOk;
}

struct EvalOpts {
  std::string model;
  std::string lm;
  std::string poisoned;
  std::string truth;
  std::string clean;
  int classes = 2;
  std::vector<double> grid;
  int points = 0;
  double bin_width = 0.0;
  DefenseFlags flags;
};

struct EvalInputs {
  PipelineConfig cfg;
  victim::TextClassifier model{2, 2};
  std::unique_ptr<lm::PerplexityScorer> scorer;
  text::Dataset poisoned;
  text::Dataset clean;
  text::Dataset validation;
};

EvalInputs load_eval_inputs(const Globals& g, const EvalOpts& o) {
  EvalInputs in;
  in.cfg = load_config(g);
  o.flags.apply(in.cfg);
  if (!o.grid.empty()) in.cfg.sweep_grid = o.grid;
  if (o.points > 0) in.cfg.sweep_points = o.points;
  if (o.bin_width > 0.0) in.cfg.score_bin_width = o.bin_width;
  in.model = load_model(o.model);
  in.scorer = open_lm(o.lm);
  in.poisoned = load_data(o.poisoned, o.classes, text::Split::test, "poisoned");
  require_file(o.truth, "truth");
  attack::apply_ground_truth(in.poisoned, pipeline::read_json(o.truth));
  in.clean = load_data(o.clean, o.classes, text::Split::test, "clean");
  in.validation.num_classes = o.classes;
  if (!o.flags.validation.empty()) {
    in.validation = load_data(o.flags.validation, o.classes, text::Split::validation, "validation");
  }
  return in;
}

int cmd_evaluate(const Globals& g, const EvalOpts& o, std::ostream& out) {
  const auto in = load_eval_inputs(g, o);
  const auto r = pipeline::evaluate_defense(in.model, *in.scorer, in.poisoned, in.clean, in.validation, in.cfg);
  const fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
  pipeline::write_bundle(r, in.cfg, dir);
  out << pipeline::read_text(dir / "report.txt");
  return kOk;
}

int cmd_sweep(const Globals& g, const EvalOpts& o, std::ostream& out) {
  const auto in = load_eval_inputs(g, o);
  const auto grid = in.cfg.sweep_grid.empty()
                        ? pipeline::auto_grid(*in.scorer, in.poisoned, in.clean, in.cfg.sweep_points)
                        : in.cfg.sweep_grid;
  const auto rows = eval::sweep_threshold(in.model, *in.scorer, in.poisoned, in.clean, grid);
  const auto csv = eval::sweep_to_csv(rows);
  if (!g.out_dir.empty()) pipeline::write_text(output_path(g, "", "sweep.csv"), csv);
  out << csv;
  return kOk;
}

struct RunOpts {
  std::string scenario;
  DefenseFlags flags;
};

int cmd_run_experiment(const Globals& g, const RunOpts& o, std::ostream& out) {
  auto cfg = load_config(g);
  if (!o.scenario.empty()) cfg.scenario = pipeline::parse_scenario(o.scenario);
  o.flags.apply(cfg);
  const auto wb = pipeline::prepare(cfg);
  const auto r = pipeline::evaluate(wb, cfg);
  const fs::path dir = g.out_dir.empty() ? fs::path("run") : fs::path(g.out_dir);
  pipeline::write_bundle(r, cfg, dir);
  out << pipeline::read_text(dir / "report.txt") << "bundle written to " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Backdoor poisoning and ONION defense toolkit", "onion"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", pipeline::kToolVersion);

  Globals g;
  app.add_option("--config", g.config, "Pipeline config JSON (or a run manifest)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Top-level seed; every sub-seed is derived from it");
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  c_synth->add_option("--split", synth.split, "train, validation or test");
  c_synth->add_option("--classes", synth.classes);
  c_synth->add_option("--per-class", synth.per_class);
  c_synth->add_option("--vocab-per-class", synth.vocab_per_class);
  c_synth->add_option("--min-len", synth.min_len);
  c_synth->add_option("--max-len", synth.max_len);
  c_synth->add_option("--out", synth.out, "Output TSV");

  PoisonOpts poison;
  auto* c_poison = app.add_subcommand("poison", "Insert triggers and write a ground-truth sidecar");
  c_poison->add_option("--in", poison.in, "Clean TSV")->required();
  c_poison->add_option("--classes", poison.classes);
  c_poison->add_option("--out", poison.out, "Poisoned TSV");
  c_poison->add_option("--truth", poison.truth, "Ground-truth JSON (default <out>.truth.json)");
  c_poison->add_flag("--test-set", poison.test_set, "Build an ASR test set instead of poisoning training data");
  c_poison->add_option("--kind", poison.kind, "word_insertion or sentence_insertion");
  c_poison->add_option("--tier", poison.tier, "rare, middle or high");
  c_poison->add_option("--rate", poison.rate, "Poison rate");
  c_poison->add_option("--target", poison.target, "Target label");
  c_poison->add_option("--num-triggers", poison.num_triggers);
  c_poison->add_option("--trigger", poison.triggers, "Explicit trigger word (repeatable)");
  c_poison->add_option("--triggers-from", poison.triggers_from, "Reuse trigger words of a ground-truth sidecar");
  c_poison->add_option("--vocab", poison.vocab, "TSV whose word frequencies pick tiered triggers");

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "Train (or fine-tune with --init) the victim classifier");
  c_train->add_option("--data", train.data, "Training TSV")->required();
  c_train->add_option("--classes", train.classes);
  c_train->add_option("--out", train.out, "Model JSON");
  c_train->add_option("--init", train.init, "Existing model to fine-tune");
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--l2", train.l2);
  c_train->add_option("--feature-dim", train.feature_dim);

  TrainLmOpts train_lm;
  auto* c_train_lm = app.add_subcommand("train-lm", "Train the n-gram language model");
  c_train_lm->add_option("--data", train_lm.data, "Training TSV")->required();
  c_train_lm->add_option("--classes", train_lm.classes);
  c_train_lm->add_option("--order", train_lm.order);
  c_train_lm->add_option("--out", train_lm.out, "LM JSON");

  ServeOpts serve;
  auto* c_serve = app.add_subcommand("serve-lm", "Serve a language model over the perplexity protocol");
  c_serve->add_option("--lm", serve.lm, "LM JSON")->required();
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--port", serve.port);

  TuneOpts tune;
  auto* c_tune = app.add_subcommand("tune-threshold", "Pick t_s on a validation split");
  c_tune->add_option("--model", tune.model)->required();
  c_tune->add_option("--lm", tune.lm, "LM JSON or http(s) endpoint")->required();
  c_tune->add_option("--validation", tune.validation)->required();
  c_tune->add_option("--classes", tune.classes);
  c_tune->add_option("--max-cacc-drop", tune.max_cacc_drop);
  c_tune->add_option("--out", tune.out);

  DefendOpts defend;
  auto* c_defend = app.add_subcommand("defend", "Sanitize a TSV with ONION, PSO or GA");
  c_defend->add_option("--model", defend.model, "Victim model, needed for --threshold auto");
  c_defend->add_option("--lm", defend.lm, "LM JSON or http(s) endpoint")->required();
  c_defend->add_option("--in", defend.in)->required();
  c_defend->add_option("--out", defend.out);
  c_defend->add_option("--sidecar", defend.sidecar, "Removed-indices JSON (default <out>.removed.json)");
  c_defend->add_option("--classes", defend.classes);
  defend.flags.add(c_defend);

  auto add_eval = [](CLI::App* cmd, EvalOpts& o) {
    cmd->add_option("--model", o.model)->required();
    cmd->add_option("--lm", o.lm, "LM JSON or http(s) endpoint")->required();
    cmd->add_option("--poisoned", o.poisoned, "Poisoned test TSV")->required();
    cmd->add_option("--truth", o.truth, "Its ground-truth sidecar")->required();
    cmd->add_option("--clean", o.clean, "Clean test TSV")->required();
    cmd->add_option("--classes", o.classes);
    cmd->add_option("--grid", o.grid, "Sweep thresholds")->delimiter(',');
    cmd->add_option("--points", o.points, "Automatic sweep grid size");
    cmd->add_option("--bin-width", o.bin_width, "Score histogram bin width");
    o.flags.add(cmd);
  };
  EvalOpts evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Measure a defense and write the report bundle");
  add_eval(c_eval, evaluate);
  EvalOpts sweep;
  auto* c_sweep = app.add_subcommand("sweep", "ASR and CACC of ONION over a threshold grid");
  add_eval(c_sweep, sweep);

  RunOpts run_opts;
  auto* c_run = app.add_subcommand("run-experiment", "Poison, train, defend and evaluate end to end");
  c_run->add_option("--scenario", run_opts.scenario, "post_training, pre_training or fine_tune_clean");
  run_opts.flags.add(c_run);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (c_synth->parsed()) return cmd_synth(g, synth, out);
    if (c_poison->parsed()) return cmd_poison(g, poison, out);
    if (c_train->parsed()) return cmd_train(g, train, out);
    if (c_train_lm->parsed()) return cmd_train_lm(g, train_lm, out);
    if (c_serve->parsed()) return cmd_serve_lm(serve, out);
    if (c_tune->parsed()) return cmd_tune(g, tune, out);
    if (c_defend->parsed()) return cmd_defend(g, defend, out);
    if (c_eval->parsed()) return cmd_evaluate(g, evaluate, out);
    if (c_sweep->parsed()) return cmd_sweep(g, sweep, out);
    if (c_run->parsed()) return cmd_run_experiment(g, run_opts, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

}  // namespace onion::cli
