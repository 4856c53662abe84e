#pragma once

// Base classifiers: a multinomial logistic regression trained by mini-batch
// SGD on categorical cross-entropy, and the prediction-matrix type that also
// carries softmax outputs produced by external models.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mrens/error.hpp"
#include "mrens/label.hpp"
#include "mrens/matrix.hpp"
#include "mrens/random.hpp"
#include "mrens/text.hpp"

namespace mrens {

using ProbRow = std::array<double, kNumClasses>;

// Max-subtracted exponential normalisation.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::ranges::max_element(logits);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

// Lowest index wins among equal maxima.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// N x 3 row-stochastic class probabilities keyed by sample id.
class PredictionMatrix {
public:
  static constexpr double kRowTolerance = 1e-6;

  PredictionMatrix() : probs_(0, kNumClasses) {}

  // Rows must be finite, nonnegative and sum to 1 within kRowTolerance. Rows
  // off by more than rounding noise are rescaled; the rest are kept bit for
  // bit, so re-wrapping rows never perturbs them.
  PredictionMatrix(std::string model_id, std::vector<std::string> ids, Matrix probs)
      : model_id_(std::move(model_id)), ids_(std::move(ids)), probs_(std::move(probs)) {
    if (probs_.cols() != kNumClasses && !(probs_.rows() == 0 && probs_.cols() == 0)) {
      throw Error("base_learner", "DimensionMismatch", "prediction rows need exactly 3 class columns");
    }
    if (probs_.rows() == 0) probs_ = Matrix(0, kNumClasses);
    if (ids_.size() != probs_.rows()) {
      throw Error("base_learner", "DimensionMismatch", "id count does not match prediction rows");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!seen.insert(ids_[i]).second) {
        throw Error("base_learner", "DuplicateId", "duplicate sample id '" + ids_[i] + "'");
      }
      auto row = probs_.row(i);
      double sum = 0.0;
      for (double p : row) {
        if (!std::isfinite(p)) throw Error("base_learner", "NonFinite", "non-finite probability for '" + ids_[i] + "'");
        if (p < 0.0) throw Error("base_learner", "NegativeProbability", "negative probability for '" + ids_[i] + "'");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowTolerance) {
        throw Error("base_learner", "RowSumOutOfTolerance",
                    "row '" + ids_[i] + "' sums to " + std::to_string(sum));
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        for (double& p : row) p /= sum;
      }
    }
  }

  const std::string& model_id() const noexcept { return model_id_; }
  void set_model_id(std::string id) { model_id_ = std::move(id); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const Matrix& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return ids_.size(); }

  std::span<const double> row(std::size_t i) const { return probs_.row(i); }
  Label predicted(std::size_t i) const { return label_from_index(argmax(row(i))); }

  std::vector<Label> predicted_labels() const {
    std::vector<Label> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(predicted(i));
    return out;
  }

  // Same rows reordered to follow `order`; throws IdMismatch unless the id
  // sets are identical.
  PredictionMatrix aligned_to(const std::vector<std::string>& order) const {
    if (order.size() != ids_.size()) {
      throw Error("ensemble", "IdMismatch", "model '" + model_id_ + "' covers a different number of samples");
    }
    std::unordered_map<std::string, std::size_t> where;
    where.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) where.emplace(ids_[i], i);
    Matrix out(order.size(), kNumClasses);
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto it = where.find(order[i]);
      if (it == where.end()) {
        throw Error("ensemble", "IdMismatch", "model '" + model_id_ + "' has no row for '" + order[i] + "'");
      }
      std::ranges::copy(probs_.row(it->second), out.row(i).begin());
    }
    return PredictionMatrix(model_id_, order, std::move(out));
  }

private:
  std::string model_id_;
  std::vector<std::string> ids_;
  Matrix probs_;
};

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error("base_learner", "BadConfig", "learning_rate must be positive");
    }
    if (batch_size < 1) throw Error("base_learner", "BadConfig", "batch_size must be at least 1");
  }
};

// Affine map to class logits: logits = weights * x + bias, weights is C x D.
struct LinearModel {
  Matrix weights;
  std::vector<double> bias;

  LinearModel() = default;
  LinearModel(std::size_t num_classes, std::size_t feature_dim)
      : weights(num_classes, feature_dim), bias(num_classes, 0.0) {}

  std::size_t num_classes() const noexcept { return weights.rows(); }
  std::size_t feature_dim() const noexcept { return weights.cols(); }

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> z(bias);
    for (std::size_t c = 0; c < num_classes(); ++c) {
      const auto w = weights.row(c);
      double acc = 0.0;
      for (std::size_t d = 0; d < w.size(); ++d) acc += w[d] * x[d];
      z[c] += acc;
    }
    return z;
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct Gradient {
  Matrix weights;
  std::vector<double> bias;
};

namespace detail {

inline void check_training_inputs(const Matrix& features, std::span<const Label> labels) {
  if (features.rows() == 0) throw Error("base_learner", "EmptyDataset", "no training samples");
  if (features.rows() != labels.size()) {
    throw Error("base_learner", "DimensionMismatch",
                std::to_string(features.rows()) + " feature rows but " + std::to_string(labels.size()) + " labels");
  }
}

inline void check_feature_dim(const LinearModel& model, const Matrix& features) {
  if (features.cols() != model.feature_dim()) {
    throw Error("base_learner", "DimensionMismatch",
                "model expects " + std::to_string(model.feature_dim()) + " features, got " +
                    std::to_string(features.cols()));
  }
}

}  // namespace detail

// Mean categorical cross-entropy over the rows listed in `batch`.
inline double mean_cross_entropy(const LinearModel& model, const Matrix& features, std::span<const Label> labels,
                                 std::span<const std::size_t> batch) {
  double total = 0.0;
  for (auto i : batch) {
    const auto z = model.logits(features.row(i));
    const double m = *std::ranges::max_element(z);
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    total += m + std::log(lse) - z[index_of(labels[i])];
  }
  return total / static_cast<double>(batch.size());
}

inline double mean_cross_entropy(const LinearModel& model, const Matrix& features, std::span<const Label> labels) {
  std::vector<std::size_t> all(features.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return mean_cross_entropy(model, features, labels, all);
}

// Analytic gradient of mean_cross_entropy: (softmax - onehot) x^T averaged
// over the batch.
inline Gradient cross_entropy_gradient(const LinearModel& model, const Matrix& features,
                                       std::span<const Label> labels, std::span<const std::size_t> batch) {
  const std::size_t C = model.num_classes();
  const std::size_t D = model.feature_dim();
  Gradient g{Matrix(C, D), std::vector<double>(C, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto i : batch) {
    const auto x = features.row(i);
    auto delta = softmax(model.logits(x));
    delta[index_of(labels[i])] -= 1.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double s = delta[c] * inv_n;
      g.bias[c] += s;
      auto gw = g.weights.row(c);
      for (std::size_t d = 0; d < D; ++d) gw[d] += s * x[d];
    }
  }
  return g;
}

// Mini-batch SGD from zero weights. Samples are reshuffled every epoch from a
// generator seeded once with config.seed; the last short batch is kept.
// If `epoch_losses` is given, the full-data loss after each epoch is appended.
inline LinearModel train(const Matrix& features, std::span<const Label> labels, const TrainConfig& config,
                         std::vector<double>* epoch_losses = nullptr) {
  config.validate();
  detail::check_training_inputs(features, labels);
  LinearModel model(kNumClasses, features.cols());
  Rng rng(config.seed);
  const std::size_t n = features.rows();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const auto g = cross_entropy_gradient(model, features, labels, batch);
      auto& w = model.weights.data();
      const auto& gw = g.weights.data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= config.learning_rate * gw[k];
      for (std::size_t c = 0; c < model.bias.size(); ++c) model.bias[c] -= config.learning_rate * g.bias[c];
    }
    if (epoch_losses) epoch_losses->push_back(mean_cross_entropy(model, features, labels));
  }
  return model;
}

inline PredictionMatrix predict_proba(const LinearModel& model, const Matrix& features,
                                      std::vector<std::string> ids, std::string model_id = {}) {
  detail::check_feature_dim(model, features);
  if (ids.size() != features.rows()) {
    throw Error("base_learner", "DimensionMismatch", "id count does not match feature rows");
  }
  if (model.num_classes() != kNumClasses) {
    throw Error("base_learner", "DimensionMismatch", "model must have 3 output classes");
  }
  Matrix probs(features.rows(), kNumClasses);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto p = softmax(model.logits(features.row(i)));
    std::ranges::copy(p, probs.row(i).begin());
  }
  return PredictionMatrix(std::move(model_id), std::move(ids), std::move(probs));
}

// ---- files ------------------------------------------------------------------

inline constexpr const char* kPredictionHeader = "id,p_AD,p_MCI,p_CN";
inline constexpr double kIngestTolerance = 1e-3;

inline std::string to_csv(const PredictionMatrix& pm) {
  std::string out = std::string(kPredictionHeader) + "\n";
  for (std::size_t i = 0; i < pm.size(); ++i) {
    out += pm.ids()[i];
    for (double p : pm.row(i)) out += "," + text::fmt(p);
    out += "\n";
  }
  return out;
}

inline void save_predictions(const PredictionMatrix& pm, const std::filesystem::path& path) {
  text::write_file(path, to_csv(pm), "base_learner");
}

// Reads a prediction CSV. Rows summing to within 1e-3 of 1 are renormalised;
// anything further off is rejected. The model id defaults to the file stem.
inline PredictionMatrix load_predictions(const std::filesystem::path& path, std::string model_id = {}) {
  const auto rows = text::read_csv(path, "base_learner");
  if (rows.empty() || text::split(kPredictionHeader) != rows.front()) {
    throw Error("base_learner", "BadHeader", path.string() + ": expected header '" + kPredictionHeader + "'");
  }
  if (model_id.empty()) model_id = path.stem().string();
  std::vector<std::string> ids;
  Matrix probs(0, kNumClasses);
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 1 + kNumClasses || f[0].empty()) {
      throw Error("base_learner", "BadRow", path.string() + ": line " + std::to_string(r + 1) + " needs 4 fields");
    }
    if (!seen.insert(f[0]).second) {
      throw Error("base_learner", "DuplicateId", path.string() + ": duplicate id '" + f[0] + "'");
    }
    ProbRow p{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      p[c] = text::parse_double(f[c + 1], "base_learner");
      if (!std::isfinite(p[c])) {
        throw Error("base_learner", "NonFinite", path.string() + ": non-finite probability for '" + f[0] + "'");
      }
      if (p[c] < 0.0) {
        throw Error("base_learner", "NegativeProbability", path.string() + ": negative probability for '" + f[0] + "'");
      }
      sum += p[c];
    }
    if (std::abs(sum - 1.0) > kIngestTolerance) {
      throw Error("base_learner", "RowSumOutOfTolerance",
                  path.string() + ": row '" + f[0] + "' sums to " + text::fmt(sum));
    }
    for (auto& v : p) v /= sum;
    ids.push_back(f[0]);
    probs.append_row(p);
  }
  return PredictionMatrix(std::move(model_id), std::move(ids), std::move(probs));
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", text::round6(c.learning_rate)},
          {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json model_to_json(const LinearModel& m) {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (double w : m.weights.row(c)) row.push_back(text::round6(w));
    weights.push_back(std::move(row));
  }
  nlohmann::json bias = nlohmann::json::array();
  for (double b : m.bias) bias.push_back(text::round6(b));
  return {{"num_classes", m.num_classes()},
          {"feature_dim", m.feature_dim()},
          {"weights", std::move(weights)},
          {"bias", std::move(bias)}};
}

inline LinearModel model_from_json(const nlohmann::json& j) {
  try {
    const auto C = j.at("num_classes").get<std::size_t>();
    const auto D = j.at("feature_dim").get<std::size_t>();
    LinearModel m(C, D);
    const auto& w = j.at("weights");
    const auto& b = j.at("bias");
    if (w.size() != C || b.size() != C) throw Error("base_learner", "BadModel", "weight/bias shape mismatch");
    for (std::size_t c = 0; c < C; ++c) {
      if (w[c].size() != D) throw Error("base_learner", "BadModel", "weight row has wrong length");
      for (std::size_t d = 0; d < D; ++d) m.weights(c, d) = w[c][d].get<double>();
      m.bias[c] = b[c].get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("base_learner", "BadModel", e.what());
  }
}

inline void save_model(const LinearModel& m, const TrainConfig& config, const std::filesystem::path& path) {
  auto j = model_to_json(m);
  j["config"] = config_to_json(config);
  text::write_file(path, j.dump(1) + "\n", "base_learner");
}

inline LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("base_learner", "IoFailure", "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("base_learner", "BadModel", path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace mrens
