#include "onion/victim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "onion/errors.hpp"
#include "onion/rng.hpp"

namespace onion::victim {

using nlohmann::json;
using text::Dataset;
using text::Sentence;

namespace {

constexpr char kSep = '\x1f';

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

void check_train_config(const TrainConfig& cfg, bool allow_zero_lr) {
  if (cfg.epochs < 1) throw UsageError("epochs must be >= 1");
  if (allow_zero_lr ? !(cfg.learning_rate >= 0.0) : !(cfg.learning_rate > 0.0)) {
    throw UsageError("learning_rate must be positive");
  }
  if (!(cfg.l2 >= 0.0)) throw UsageError("l2 must be non-negative");
  if (cfg.feature_dim < 2) throw UsageError("feature_dim must be >= 2");
  if (cfg.batch_size < 1) throw UsageError("batch_size must be >= 1");
}

// One pass of mini-batch descent over pre-featurized examples.
void run_epochs(TextClassifier& m, const std::vector<SparseVector>& xs, const std::vector<int>& ys,
                const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(xs.size());
  const auto k = static_cast<std::size_t>(m.num_classes());
  std::vector<std::vector<double>> probs;
  auto& w = m.weights();
  auto& b = m.bias();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      probs.clear();
      for (std::size_t i = start; i < end; ++i) probs.push_back(m.probabilities(xs[order[i]]));
      if (cfg.l2 > 0.0) {
        const double shrink = 1.0 - cfg.learning_rate * cfg.l2;
        for (double& v : w) v *= shrink;
      }
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = probs[i - start];
        const auto& x = xs[order[i]];
        for (std::size_t c = 0; c < k; ++c) {
          const double err = p[c] - (static_cast<int>(c) == ys[order[i]] ? 1.0 : 0.0);
          b[c] -= scale * err;
          for (const auto& [bucket, value] : x) m.weight(static_cast<int>(c), bucket) -= scale * err * value;
        }
      }
    }
  }
}

std::vector<SparseVector> featurize_all(const Dataset& d, std::uint32_t dim) {
  std::vector<SparseVector> xs;
  xs.reserve(d.size());
  for (const auto& e : d.examples) xs.push_back(featurize(e.sentence, dim));
  return xs;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SparseVector featurize(const Sentence& s, std::uint32_t feature_dim) {
  if (feature_dim < 2) throw UsageError("feature_dim must be >= 2");
  std::vector<std::uint32_t> buckets;
  buckets.reserve(2 * s.size());
  std::string key;
  for (std::size_t i = 0; i < s.size(); ++i) {
    key.assign("u");
    key.push_back(kSep);
    key += s[i].text();
    buckets.push_back(static_cast<std::uint32_t>(fnv1a64(key) % feature_dim));
    if (i + 1 < s.size()) {
      key.assign("b");
      key.push_back(kSep);
      key += s[i].text();
      key.push_back(kSep);
      key += s[i + 1].text();
      buckets.push_back(static_cast<std::uint32_t>(fnv1a64(key) % feature_dim));
    }
  }
  std::sort(buckets.begin(), buckets.end());
  SparseVector x;
  for (std::uint32_t bkt : buckets) {
    if (!x.empty() && x.back().first == bkt) {
      x.back().second += 1.0;
    } else {
      x.emplace_back(bkt, 1.0);
    }
  }
  double norm = 0.0;
  for (const auto& [_, v] : x) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& [_, v] : x) v /= norm;
  return x;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  try {
    base.epochs = j.value("epochs", base.epochs);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.l2 = j.value("l2", base.l2);
    base.seed = j.value("seed", base.seed);
    base.feature_dim = j.value("feature_dim", base.feature_dim);
    base.batch_size = j.value("batch_size", base.batch_size);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid train config: ") + e.what());
  }
  return base;
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},   {"learning_rate", cfg.learning_rate}, {"l2", cfg.l2},
          {"seed", cfg.seed},       {"feature_dim", cfg.feature_dim},     {"batch_size", cfg.batch_size}};
}

TextClassifier::TextClassifier(int num_classes, std::uint32_t feature_dim)
    : num_classes_(num_classes), feature_dim_(feature_dim) {
  if (num_classes < 2) throw UsageError("classifier needs >= 2 classes");
  if (feature_dim < 2) throw UsageError("feature_dim must be >= 2");
  weights_.assign(static_cast<std::size_t>(num_classes) * feature_dim, 0.0);
  bias_.assign(static_cast<std::size_t>(num_classes), 0.0);
}

std::vector<double> TextClassifier::logits(const SparseVector& x) const {
  std::vector<double> z = bias_;
  for (int c = 0; c < num_classes_; ++c) {
    for (const auto& [bucket, value] : x) z[static_cast<std::size_t>(c)] += weight(c, bucket) * value;
  }
  return z;
}

std::vector<double> TextClassifier::probabilities(const SparseVector& x) const {
  auto z = logits(x);
  softmax_inplace(z);
  return z;
}

Prediction TextClassifier::predict(const Sentence& s) const {
  Prediction p;
  p.probabilities = probabilities(featurize(s, feature_dim_));
  // max_element returns the first maximum, i.e. the lowest class id.
  p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                             p.probabilities.begin());
  return p;
}

void TextClassifier::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "onion-text-classifier";
  j["version"] = 1;
  j["hash"] = kHashId;
  j["num_classes"] = num_classes_;
  j["feature_dim"] = feature_dim_;
  j["bias"] = bias_;
  // Columns with any non-zero weight: [bucket, w_0, ..., w_{k-1}].
  json cols = json::array();
  for (std::uint32_t f = 0; f < feature_dim_; ++f) {
    bool any = false;
    for (int c = 0; c < num_classes_ && !any; ++c) any = weight(c, f) != 0.0;
    if (!any) continue;
    json col = json::array({f});
    for (int c = 0; c < num_classes_; ++c) col.push_back(weight(c, f));
    cols.push_back(std::move(col));
  }
  j["columns"] = std::move(cols);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump() << '\n';
}

TextClassifier TextClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    if (j.at("format") != "onion-text-classifier" || j.at("version") != 1) {
      throw DataError("unsupported model format in " + path.string());
    }
    if (j.at("hash") != kHashId) throw DataError("model " + path.string() + " uses a different feature hash");
    TextClassifier m(j.at("num_classes").get<int>(), j.at("feature_dim").get<std::uint32_t>());
    m.bias_ = j.at("bias").get<std::vector<double>>();
    if (m.bias_.size() != static_cast<std::size_t>(m.num_classes_)) throw DataError("bias size mismatch");
    for (const auto& col : j.at("columns")) {
      const auto f = col.at(0).get<std::uint32_t>();
      if (f >= m.feature_dim_ || col.size() != static_cast<std::size_t>(m.num_classes_) + 1) {
        throw DataError("bad weight column in " + path.string());
      }
      for (int c = 0; c < m.num_classes_; ++c) m.weight(c, f) = col.at(static_cast<std::size_t>(c) + 1).get<double>();
    }
    return m;
  } catch (const json::exception& e) {
    throw DataError("malformed model file " + path.string() + ": " + e.what());
  }
}

double loss(const TextClassifier& m, const Dataset& d, double l2) {
  if (d.empty()) throw UsageError("loss: empty dataset");
  double total = 0.0;
  for (const auto& e : d.examples) {
    const auto p = m.probabilities(featurize(e.sentence, m.feature_dim()));
    total -= std::log(p[static_cast<std::size_t>(e.label)]);
  }
  double sq = 0.0;
  for (double w : m.weights()) sq += w * w;
  return total / static_cast<double>(d.size()) + 0.5 * l2 * sq;
}

std::vector<double> loss_gradient(const TextClassifier& m, const Dataset& d, double l2) {
  if (d.empty()) throw UsageError("loss_gradient: empty dataset");
  const auto k = static_cast<std::size_t>(m.num_classes());
  const std::size_t nw = m.weights().size();
  std::vector<double> g(nw + k, 0.0);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  for (const auto& e : d.examples) {
    const auto x = featurize(e.sentence, m.feature_dim());
    const auto p = m.probabilities(x);
    for (std::size_t c = 0; c < k; ++c) {
      const double err = (p[c] - (static_cast<int>(c) == e.label ? 1.0 : 0.0)) * inv_n;
      g[nw + c] += err;
      for (const auto& [bucket, value] : x) g[c * m.feature_dim() + bucket] += err * value;
    }
  }
  for (std::size_t i = 0; i < nw; ++i) g[i] += l2 * m.weights()[i];
  return g;
}

TextClassifier train(const Dataset& d, const TrainConfig& cfg) {
  check_train_config(cfg, false);
  if (d.empty()) throw UsageError("train: empty dataset");
  if (d.split != text::Split::train) throw UsageError("train: expects a train split");
  text::validate(d);
  TextClassifier m(d.num_classes, cfg.feature_dim);
  std::vector<int> ys;
  for (const auto& e : d.examples) ys.push_back(e.label);
  run_epochs(m, featurize_all(d, cfg.feature_dim), ys, cfg);
  return m;
}

TextClassifier fine_tune(const TextClassifier& m, const Dataset& clean, const TrainConfig& cfg) {
  check_train_config(cfg, true);
  if (clean.empty()) throw UsageError("fine_tune: empty dataset");
  if (clean.has_poisoned()) throw DataError("fine_tune: dataset contains poisoned examples");
  if (clean.num_classes != m.num_classes()) throw UsageError("fine_tune: class count mismatch");
  text::validate(clean);
  TextClassifier out = m;
  std::vector<int> ys;
  for (const auto& e : clean.examples) ys.push_back(e.label);
  run_epochs(out, featurize_all(clean, m.feature_dim()), ys, cfg);
  return out;
}

double accuracy(const TextClassifier& m, const Dataset& d) {
  if (d.empty()) throw UsageError("accuracy: empty dataset");
  std::size_t hits = 0;
  for (const auto& e : d.examples) hits += m.predict_label(e.sentence) == e.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

}  // namespace onion::victim
