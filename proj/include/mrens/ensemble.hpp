#pragma once

// Combining base-model predictions: recall-ranked model selection, a
// single-layer softmax stacker over concatenated base outputs, and 2-of-3
// majority voting with a CN fallback when all three votes differ.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mrens/base_learner.hpp"
#include "mrens/error.hpp"
#include "mrens/label.hpp"
#include "mrens/matrix.hpp"
#include "mrens/text.hpp"

namespace mrens {

inline constexpr std::size_t kVoters = 3;

// Highest macro recall first; equal recalls order by model id.
inline std::vector<std::string> select_top_k_models(const std::map<std::string, double>& recalls, std::size_t k) {
  if (k > recalls.size()) {
    throw Error("ensemble", "KTooLarge",
                "asked for " + std::to_string(k) + " models but only " + std::to_string(recalls.size()) + " exist");
  }
  std::vector<std::pair<std::string, double>> ranked(recalls.begin(), recalls.end());
  std::ranges::stable_sort(ranked, [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

namespace detail {

// Reorders bases 1..M-1 to follow the sample order of base 0.
inline std::vector<PredictionMatrix> align_bases(std::span<const PredictionMatrix> bases) {
  if (bases.empty()) throw Error("ensemble", "DimensionMismatch", "no base predictions given");
  std::vector<PredictionMatrix> out;
  out.reserve(bases.size());
  out.push_back(bases[0]);
  for (std::size_t m = 1; m < bases.size(); ++m) out.push_back(bases[m].aligned_to(bases[0].ids()));
  return out;
}

}  // namespace detail

// Per-sample feature = concatenation of each base's class probabilities, in
// the order the bases are given. Samples follow the first base's order.
inline Matrix stack_features(std::span<const PredictionMatrix> bases) {
  const auto aligned = detail::align_bases(bases);
  const std::size_t n = aligned[0].size();
  Matrix x(n, aligned.size() * kNumClasses);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < aligned.size(); ++m) {
      const auto r = aligned[m].row(i);
      for (std::size_t c = 0; c < kNumClasses; ++c) x(i, m * kNumClasses + c) = r[c];
    }
  }
  return x;
}

struct StackingModel {
  LinearModel layer;  // C x (M*C)
  std::vector<std::string> base_order;

  friend bool operator==(const StackingModel&, const StackingModel&) = default;
};

inline void check_base_ids(std::span<const PredictionMatrix> bases) {
  for (std::size_t a = 0; a < bases.size(); ++a) {
    if (bases[a].model_id().empty()) {
      throw Error("ensemble", "IdMismatch", "every base prediction matrix needs a model id");
    }
    for (std::size_t b = a + 1; b < bases.size(); ++b) {
      if (bases[a].model_id() == bases[b].model_id()) {
        throw Error("ensemble", "IdMismatch", "model id '" + bases[a].model_id() + "' given twice");
      }
    }
  }
}

// Trains the affine+softmax meta-learner with the same SGD routine as the base
// learner. `labels` follow the sample order of bases[0].
inline StackingModel stack_train(std::span<const PredictionMatrix> bases, std::span<const Label> labels,
                                 const TrainConfig& config) {
  check_base_ids(bases);
  const Matrix x = stack_features(bases);
  if (labels.size() != x.rows()) {
    throw Error("ensemble", "DimensionMismatch",
                std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) + " samples");
  }
  StackingModel model;
  model.layer = train(x, labels, config);
  for (const auto& b : bases) model.base_order.push_back(b.model_id());
  return model;
}

// Bases may arrive in any order; they are matched to the trained layout by
// model id.
inline PredictionMatrix stack_predict(const StackingModel& model, std::span<const PredictionMatrix> bases,
                                      std::string model_id = "stack") {
  if (bases.size() != model.base_order.size()) {
    throw Error("ensemble", "IdMismatch",
                "model was trained on " + std::to_string(model.base_order.size()) + " bases, got " +
                    std::to_string(bases.size()));
  }
  std::vector<PredictionMatrix> ordered;
  for (const auto& id : model.base_order) {
    auto it = std::ranges::find_if(bases, [&](const PredictionMatrix& p) { return p.model_id() == id; });
    if (it == bases.end()) throw Error("ensemble", "IdMismatch", "no predictions for base model '" + id + "'");
    ordered.push_back(*it);
  }
  const Matrix x = stack_features(ordered);
  if (x.cols() != model.layer.feature_dim()) {
    throw Error("ensemble", "DimensionMismatch", "stacking layer width does not match the bases");
  }
  return predict_proba(model.layer, x, ordered[0].ids(), std::move(model_id));
}

inline void save_stacking_model(const StackingModel& m, const TrainConfig& config, const std::filesystem::path& path) {
  auto j = model_to_json(m.layer);
  j["base_order"] = m.base_order;
  j["config"] = config_to_json(config);
  text::write_file(path, j.dump(1) + "\n", "ensemble");
}

inline StackingModel load_stacking_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("ensemble", "IoFailure", "cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    StackingModel m{model_from_json(j), j.at("base_order").get<std::vector<std::string>>()};
    if (m.layer.feature_dim() != m.base_order.size() * kNumClasses) {
      throw Error("ensemble", "BadModel", "layer width does not match base_order");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("ensemble", "BadModel", path.string() + ": " + e.what());
  }
}

struct VoteResult {
  std::string id;
  std::array<Label, kVoters> votes{};
  Label decision = Label::CN;
  bool tie = false;
};

// Mode of three votes; with no repeated vote the decision falls back to CN.
inline std::pair<Label, bool> vote_decision(const std::array<Label, kVoters>& votes) {
  if (votes[0] == votes[1] || votes[0] == votes[2]) return {votes[0], false};
  if (votes[1] == votes[2]) return {votes[1], false};
  return {Label::CN, true};
}

inline std::vector<VoteResult> majority_vote(std::span<const PredictionMatrix> bases) {
  if (bases.size() != kVoters) {
    throw Error("ensemble", "DimensionMismatch", "majority voting needs exactly 3 base models");
  }
  const auto aligned = detail::align_bases(bases);
  std::vector<VoteResult> out;
  out.reserve(aligned[0].size());
  for (std::size_t i = 0; i < aligned[0].size(); ++i) {
    VoteResult r;
    r.id = aligned[0].ids()[i];
    for (std::size_t m = 0; m < kVoters; ++m) r.votes[m] = aligned[m].predicted(i);
    std::tie(r.decision, r.tie) = vote_decision(r.votes);
    out.push_back(std::move(r));
  }
  return out;
}

inline double tie_fraction(std::span<const VoteResult> results) {
  if (results.empty()) return 0.0;
  const auto ties = std::ranges::count_if(results, [](const VoteResult& r) { return r.tie; });
  return static_cast<double>(ties) / static_cast<double>(results.size());
}

// Score source for ROC curves of the voting ensemble: the mean of the voters'
// probability rows.
inline PredictionMatrix mean_scores(std::span<const PredictionMatrix> bases, std::string model_id = "vote") {
  const auto aligned = detail::align_bases(bases);
  const std::size_t n = aligned[0].size();
  Matrix probs(n, kNumClasses);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      for (const auto& b : aligned) probs(i, c) += b.row(i)[c];
      sum += probs(i, c);
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) probs(i, c) /= sum;
  }
  return PredictionMatrix(std::move(model_id), aligned[0].ids(), std::move(probs));
}

// Scan-level roll-up: mean of the slice rows, renormalised.
inline ProbRow aggregate_scan(std::span<const ProbRow> slice_rows) {
  if (slice_rows.empty()) throw Error("ensemble", "EmptyScan", "scan has no slice predictions");
  ProbRow mean{};
  for (const auto& r : slice_rows) {
    for (std::size_t c = 0; c < kNumClasses; ++c) mean[c] += r[c];
  }
  double sum = 0.0;
  for (auto& v : mean) {
    v /= static_cast<double>(slice_rows.size());
    sum += v;
  }
  for (auto& v : mean) v /= sum;
  return mean;
}

// Sample ids of the form "<scan_id>:<slice_index>" name a slice; anything
// else is taken to be a scan id.
inline std::string scan_of(const std::string& sample_id) {
  const auto pos = sample_id.rfind(':');
  return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

inline std::string slice_sample_id(const std::string& scan_id, std::size_t slice_index) {
  return scan_id + ":" + std::to_string(slice_index);
}

// Groups slice rows by scan and aggregates each group. Scans appear in order
// of first occurrence.
inline PredictionMatrix aggregate_by_scan(const PredictionMatrix& slices) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<ProbRow>> groups;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto scan = scan_of(slices.ids()[i]);
    auto [it, inserted] = groups.try_emplace(scan);
    if (inserted) order.push_back(scan);
    ProbRow r{};
    std::ranges::copy(slices.row(i), r.begin());
    it->second.push_back(r);
  }
  Matrix probs(0, kNumClasses);
  for (const auto& scan : order) probs.append_row(aggregate_scan(groups.at(scan)));
  return PredictionMatrix(slices.model_id(), std::move(order), std::move(probs));
}

inline std::string votes_to_csv(std::span<const VoteResult> results) {
  std::string out = "id,vote_1,vote_2,vote_3,decision,tie\n";
  for (const auto& r : results) {
    out += r.id;
    for (Label v : r.votes) out += "," + std::string(to_string(v));
    out += "," + std::string(to_string(r.decision)) + "," + (r.tie ? "1" : "0") + "\n";
  }
  return out;
}

inline std::vector<VoteResult> load_votes(const std::filesystem::path& path) {
  const auto rows = text::read_csv(path, "ensemble");
  if (rows.empty() || rows.front() != text::split("id,vote_1,vote_2,vote_3,decision,tie")) {
    throw Error("ensemble", "BadHeader", path.string() + ": expected vote CSV header");
  }
  std::vector<VoteResult> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 6) throw Error("ensemble", "BadRow", path.string() + ": line " + std::to_string(r + 1));
    VoteResult v;
    v.id = f[0];
    for (std::size_t m = 0; m < kVoters; ++m) v.votes[m] = parse_label(f[m + 1]);
    v.decision = parse_label(f[4]);
    v.tie = f[5] == "1";
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace mrens
