#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <json.hpp>

#include "onion/textcore.hpp"

namespace onion::victim {

// Sparse feature vector: (bucket, value) pairs sorted by bucket, no repeats.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

// Identifier stored with saved models; bumps whenever featurize changes.
inline constexpr const char* kHashId = "fnv1a64-unigram-bigram-v1";

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

// Unigram features hash "u\x1f<tok>", bigram features hash
// "b\x1f<tok1>\x1f<tok2>", both with FNV-1a 64 reduced modulo feature_dim.
// Counts are L2-normalized; the empty sentence maps to the zero vector.
SparseVector featurize(const text::Sentence& s, std::uint32_t feature_dim);

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.5;
  double l2 = 1e-6;
  std::uint64_t seed = 0;
  std::uint32_t feature_dim = 1u << 14;
  std::size_t batch_size = 32;
};

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& cfg);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

// Multinomial logistic regression over hashed bag-of-n-grams.
class TextClassifier {
 public:
  TextClassifier(int num_classes, std::uint32_t feature_dim);

  int num_classes() const { return num_classes_; }
  std::uint32_t feature_dim() const { return feature_dim_; }

  // Row-major num_classes x feature_dim.
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

  double weight(int cls, std::uint32_t bucket) const { return weights_[index(cls, bucket)]; }
  double& weight(int cls, std::uint32_t bucket) { return weights_[index(cls, bucket)]; }

  std::vector<double> logits(const SparseVector& x) const;
  std::vector<double> probabilities(const SparseVector& x) const;

  // Argmax of the softmax; ties go to the lower class id.
  Prediction predict(const text::Sentence& s) const;
  int predict_label(const text::Sentence& s) const { return predict(s).label; }

  void save(const std::filesystem::path& path) const;
  static TextClassifier load(const std::filesystem::path& path);

  friend bool operator==(const TextClassifier&, const TextClassifier&) = default;

 private:
  std::size_t index(int cls, std::uint32_t bucket) const {
    return static_cast<std::size_t>(cls) * feature_dim_ + bucket;
  }

  int num_classes_;
  std::uint32_t feature_dim_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

// Mean softmax cross-entropy over `d` plus (l2 / 2) * ||W||^2 (bias unpenalized).
double loss(const TextClassifier& m, const text::Dataset& d, double l2);

// Dense gradient of `loss` laid out as [weights..., bias...].
std::vector<double> loss_gradient(const TextClassifier& m, const text::Dataset& d, double l2);

// Mini-batch gradient descent from zero weights; batches reshuffled each
// epoch under cfg.seed. Returns the final-epoch model.
TextClassifier train(const text::Dataset& d, const TrainConfig& cfg);

// Continues descent from `m` on clean data. A zero learning rate is allowed
// and leaves the model unchanged.
TextClassifier fine_tune(const TextClassifier& m, const text::Dataset& clean, const TrainConfig& cfg);

// Plain accuracy over a dataset's stored labels.
double accuracy(const TextClassifier& m, const text::Dataset& d);

}  // namespace onion::victim
