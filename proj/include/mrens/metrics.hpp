#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrens/base_learner.hpp"
#include "mrens/error.hpp"
#include "mrens/label.hpp"
#include "mrens/text.hpp"

namespace mrens {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (const auto& r : counts)
      for (auto v : r) t += v;
    return t;
  }

  // One-vs-rest reduction for class c.
  struct Binary {
    std::uint64_t tp = 0, fn = 0, fp = 0, tn = 0;
  };
  Binary one_vs_rest(Label c) const noexcept {
    const std::size_t k = index_of(c);
    Binary b;
    b.tp = counts[k][k];
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      if (j == k) continue;
      b.fn += counts[k][j];
      b.fp += counts[j][k];
    }
    b.tn = total() - b.tp - b.fn - b.fp;
    return b;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const Label> truth, std::span<const Label> pred) {
  if (truth.size() != pred.size()) {
    throw Error("metrics", "LengthMismatch",
                std::to_string(truth.size()) + " truths vs " + std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) cm.counts[index_of(truth[i])][index_of(pred[i])] += 1;
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
};

namespace detail {
inline double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

// Any 0/0 ratio is reported as 0. F1 is the harmonic mean 2PR/(P+R).
inline ClassMetrics class_metrics(const ConfusionMatrix& cm, Label c) {
  const auto b = cm.one_vs_rest(c);
  ClassMetrics m;
  m.precision = detail::ratio(b.tp, b.tp + b.fp);
  m.recall = detail::ratio(b.tp, b.tp + b.fn);
  m.specificity = detail::ratio(b.tn, b.tn + b.fp);
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error("metrics", "EmptyMatrix", "confusion matrix has no samples");
  std::uint64_t trace = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) trace += cm.counts[k][k];
  return static_cast<double>(trace) / static_cast<double>(total);
}

// Unweighted mean over classes.
inline ClassMetrics macro_average(std::span<const ClassMetrics> per_class) {
  ClassMetrics m;
  if (per_class.empty()) return m;
  for (const auto& c : per_class) {
    m.precision += c.precision;
    m.recall += c.recall;
    m.specificity += c.specificity;
    m.f1 += c.f1;
  }
  const double n = static_cast<double>(per_class.size());
  m.precision /= n;
  m.recall /= n;
  m.specificity /= n;
  m.f1 /= n;
  return m;
}

struct MetricsReport {
  ConfusionMatrix confusion;
  std::array<ClassMetrics, kNumClasses> per_class{};
  ClassMetrics macro;
  double accuracy = 0.0;
};

inline MetricsReport evaluate(std::span<const Label> truth, std::span<const Label> pred) {
  MetricsReport r;
  r.confusion = confusion_matrix(truth, pred);
  for (Label l : kAllLabels) r.per_class[index_of(l)] = class_metrics(r.confusion, l);
  r.macro = macro_average(r.per_class);
  r.accuracy = accuracy(r.confusion);
  return r;
}

inline nlohmann::json to_json(const ClassMetrics& m) {
  return {{"precision", text::round6(m.precision)},
          {"recall", text::round6(m.recall)},
          {"specificity", text::round6(m.specificity)},
          {"f1", text::round6(m.f1)}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (Label l : kAllLabels) per_class[std::string(to_string(l))] = to_json(r.per_class[index_of(l)]);
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : r.confusion.counts) confusion.push_back(row);
  return {{"averaging", "macro"},
          {"samples", r.confusion.total()},
          {"accuracy", text::round6(r.accuracy)},
          {"macro", to_json(r.macro)},
          {"per_class", std::move(per_class)},
          {"confusion", std::move(confusion)}};
}

inline std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred,AD,MCI,CN\n";
  for (Label t : kAllLabels) {
    out += std::string(to_string(t));
    for (auto v : cm.counts[index_of(t)]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the (0,0) anchor
};

struct RocCurve {
  Label positive = Label::AD;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

inline double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

// Sweeps the threshold down through the distinct class-c scores; samples
// sharing a score enter together, producing a diagonal segment.
inline RocCurve roc_one_vs_all(const PredictionMatrix& scores, std::span<const Label> truth, Label c) {
  if (scores.size() != truth.size()) {
    throw Error("metrics", "LengthMismatch", "score rows and truth labels differ in length");
  }
  if (scores.size() == 0) throw Error("metrics", "EmptyMatrix", "no samples for ROC");
  const std::size_t k = index_of(c);
  std::vector<std::pair<double, bool>> s;
  s.reserve(truth.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pos = truth[i] == c;
    positives += pos;
    s.emplace_back(scores.row(i)[k], pos);
  }
  if (positives == 0) {
    throw Error("metrics", "ClassAbsent", "class " + std::string(to_string(c)) + " has no true samples");
  }
  const std::size_t negatives = truth.size() - positives;
  std::ranges::sort(s, [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.positive = c;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size();) {
    const double thr = s[i].first;
    for (; i < s.size() && s[i].first == thr; ++i) (s[i].second ? tp : fp) += 1;
    curve.points.push_back({negatives ? static_cast<double>(fp) / static_cast<double>(negatives) : 0.0,
                            static_cast<double>(tp) / static_cast<double>(positives), thr});
  }
  // With no negatives the curve never leaves fpr = 0; close it at (1,1).
  if (curve.points.back().fpr < 1.0) curve.points.push_back({1.0, 1.0, curve.points.back().threshold});
  curve.auc = trapezoid_area(curve.points);
  return curve;
}

inline std::string roc_to_csv(std::span<const RocCurve> curves) {
  std::string out = "class,fpr,tpr,threshold,auc\n";
  for (const auto& curve : curves) {
    for (const auto& p : curve.points) {
      out += std::string(to_string(curve.positive)) + "," + text::fmt(p.fpr) + "," + text::fmt(p.tpr) + "," +
             text::fmt(p.threshold) + "," + text::fmt(curve.auc) + "\n";
    }
  }
  return out;
}

}  // namespace mrens
