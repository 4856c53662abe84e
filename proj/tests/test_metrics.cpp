#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mrens/metrics.hpp"

using namespace mrens;
using Catch::Approx;

namespace {

std::vector<Label> random_labels(Rng& rng, std::size_t n) {
  std::vector<Label> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(label_from_index(uniform_below(rng, 3)));
  return out;
}

// P(score_pos > score_neg) + 0.5 P(equal) over all positive/negative pairs.
double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

PredictionMatrix score_matrix(const std::vector<ProbRow>& rows) {
  Matrix m(0, kNumClasses);
  std::vector<std::string> ids;
  for (const auto& r : rows) {
    m.append_row(r);
    ids.push_back("s" + std::to_string(ids.size()));
  }
  return PredictionMatrix("scores", std::move(ids), std::move(m));
}

}  // namespace

TEST_CASE("confusion_matrix", "[metrics]") {
  using enum Label;
  SECTION("perfect predictions fill the diagonal") {
    std::vector<Label> t;
    for (auto l : kAllLabels)
      for (int i = 0; i < 5; ++i) t.push_back(l);
    const auto cm = confusion_matrix(t, t);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) CHECK(cm.counts[a][b] == (a == b ? 5u : 0u));
    CHECK(accuracy(cm) == 1.0);
  }

  SECTION("single off-diagonal sample") {
    const auto cm = confusion_matrix(std::vector{AD}, std::vector{MCI});
    CHECK(cm.counts[0][1] == 1);
    CHECK(cm.total() == 1);
  }

  SECTION("matches a brute-force tally") {
    Rng rng(12);
    const auto truth = random_labels(rng, 200);
    const auto pred = random_labels(rng, 200);
    const auto cm = confusion_matrix(truth, pred);
    for (auto t : kAllLabels)
      for (auto p : kAllLabels) {
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) n += truth[i] == t && pred[i] == p;
        CHECK(cm.counts[index_of(t)][index_of(p)] == n);
      }
  }

  CHECK_THROWS_WITH(confusion_matrix(std::vector{AD}, std::vector<Label>{}), Catch::Matchers::ContainsSubstring("LengthMismatch"));
}

TEST_CASE("class metrics", "[metrics]") {
  SECTION("TP=8 FN=2 FP=1 TN=9 for AD") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 8;
    cm.counts[0][1] = 2;
    cm.counts[1][0] = 1;
    cm.counts[1][1] = 9;
    const auto b = cm.one_vs_rest(Label::AD);
    CHECK(b.tp == 8);
    CHECK(b.fn == 2);
    CHECK(b.fp == 1);
    CHECK(b.tn == 9);
    const auto m = class_metrics(cm, Label::AD);
    CHECK(m.precision == Approx(0.8889).margin(1e-4));
    CHECK(m.recall == Approx(0.8).margin(1e-4));
    CHECK(m.specificity == Approx(0.9).margin(1e-4));
    CHECK(m.f1 == Approx(0.8421).margin(1e-4));
    CHECK(accuracy(cm) == Approx(0.85).margin(1e-12));
  }

  SECTION("perfect class and absent class") {
    ConfusionMatrix cm;
    cm.counts[1][1] = 4;
    cm.counts[2][2] = 3;
    const auto p = class_metrics(cm, Label::MCI);
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.specificity == 1.0);
    CHECK(p.f1 == 1.0);
    const auto a = class_metrics(cm, Label::AD);
    CHECK(a.precision == 0.0);
    CHECK(a.recall == 0.0);
    CHECK(a.f1 == 0.0);
    // All 7 samples are true negatives for AD.
    CHECK(a.specificity == 1.0);
    CHECK(class_metrics(ConfusionMatrix{}, Label::AD).specificity == 0.0);
  }

  SECTION("all wrong") {
    std::vector<Label> truth(15, Label::AD), pred(15, Label::CN);
    CHECK(accuracy(confusion_matrix(truth, pred)) == 0.0);
  }

  CHECK_THROWS_WITH(accuracy(ConfusionMatrix{}), Catch::Matchers::ContainsSubstring("EmptyMatrix"));
}

TEST_CASE("macro averages", "[metrics]") {
  std::vector<ClassMetrics> pc{{1.0, 0.2, 0.3, 0.4}, {0.5, 0.2, 0.3, 0.4}, {0.0, 0.2, 0.3, 0.4}};
  const auto m = macro_average(pc);
  CHECK(m.precision == Approx(0.5));
  CHECK(m.recall == Approx(0.2));
  CHECK(m.f1 == Approx(0.4));

  Rng rng(40);
  for (int t = 0; t < 50; ++t) {
    const auto truth = random_labels(rng, 1 + uniform_below(rng, 60));
    const auto pred = random_labels(rng, truth.size());
    const auto r = evaluate(truth, pred);
    double p = 0, rec = 0, s = 0, f = 0;
    for (const auto& c : r.per_class) {
      p += c.precision;
      rec += c.recall;
      s += c.specificity;
      f += c.f1;
      for (double v : {c.precision, c.recall, c.specificity, c.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      if (c.precision == 0.0 && c.recall == 0.0) CHECK(c.f1 == 0.0);
    }
    CHECK(r.macro.precision == Approx(p / 3).margin(1e-12));
    CHECK(r.macro.recall == Approx(rec / 3).margin(1e-12));
    CHECK(r.macro.specificity == Approx(s / 3).margin(1e-12));
    CHECK(r.macro.f1 == Approx(f / 3).margin(1e-12));

    // Recall is the diagonal over the row sum; accuracy is the count-weighted
    // mean of recalls.
    double weighted = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& row = r.confusion.counts[k];
      const auto n = row[0] + row[1] + row[2];
      if (n > 0) CHECK(r.per_class[k].recall == static_cast<double>(row[k]) / static_cast<double>(n));
      weighted += r.per_class[k].recall * static_cast<double>(n);
    }
    CHECK(r.accuracy == Approx(weighted / static_cast<double>(truth.size())).margin(1e-12));
  }

  const auto j = to_json(evaluate(std::vector{Label::AD, Label::CN}, std::vector{Label::AD, Label::AD}));
  CHECK(j.at("averaging") == "macro");
  CHECK(j.at("accuracy") == 0.5);
}

TEST_CASE("ROC one-vs-all", "[metrics]") {
  using enum Label;
  SECTION("perfect separation") {
    const auto s = score_matrix({{0.9, 0.05, 0.05}, {0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.2, 0.2, 0.6}});
    const auto c = roc_one_vs_all(s, std::vector{AD, AD, MCI, CN}, AD);
    CHECK(c.auc == Approx(1.0).margin(1e-12));
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
  }

  SECTION("constant scores give the diagonal") {
    const auto s = score_matrix(std::vector<ProbRow>(6, ProbRow{0.2, 0.3, 0.5}));
    const auto c = roc_one_vs_all(s, std::vector{AD, MCI, CN, AD, CN, CN}, CN);
    CHECK(c.auc == Approx(0.5).margin(1e-12));
    CHECK(c.points.size() == 2);
  }

  SECTION("six-sample case against pairwise ranking") {
    const std::vector<ProbRow> rows{{0.6, 0.2, 0.2}, {0.3, 0.4, 0.3}, {0.3, 0.3, 0.4},
                                    {0.5, 0.25, 0.25}, {0.1, 0.8, 0.1}, {0.3, 0.5, 0.2}};
    const std::vector<Label> truth{AD, AD, MCI, CN, MCI, AD};
    std::vector<double> col;
    std::vector<bool> pos;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col.push_back(rows[i][0]);
      pos.push_back(truth[i] == AD);
    }
    // AD scores 0.6, 0.3, 0.3 vs 0.3, 0.5, 0.1: wins 3 + 1.5 + 1.5 = 6 of 9.
    CHECK(pairwise_auc(col, pos) == Approx(6.0 / 9.0));
    CHECK(roc_one_vs_all(score_matrix(rows), truth, AD).auc == Approx(6.0 / 9.0).margin(1e-9));
  }

  SECTION("random score sets") {
    Rng rng(17);
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + uniform_below(rng, 199);
      std::vector<ProbRow> rows;
      std::vector<Label> truth;
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse scores so ties occur often.
        const double a = static_cast<double>(uniform_below(rng, 11)) / 20.0;
        const double b = static_cast<double>(uniform_below(rng, 11)) / 20.0;
        rows.push_back({a, b, 1.0 - a - b});
        truth.push_back(label_from_index(uniform_below(rng, 3)));
      }
      const auto s = score_matrix(rows);
      for (auto l : kAllLabels) {
        std::vector<double> col;
        std::vector<bool> pos;
        for (std::size_t i = 0; i < n; ++i) {
          col.push_back(s.row(i)[index_of(l)]);
          pos.push_back(truth[i] == l);
        }
        const bool has_pos = std::ranges::find(pos, true) != pos.end();
        const bool has_neg = std::ranges::find(pos, false) != pos.end();
        if (!has_pos) {
          CHECK_THROWS_WITH(roc_one_vs_all(s, truth, l), Catch::Matchers::ContainsSubstring("ClassAbsent"));
          continue;
        }
        const auto c = roc_one_vs_all(s, truth, l);
        for (std::size_t k = 1; k < c.points.size(); ++k) {
          CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
          CHECK(c.points[k].tpr >= c.points[k - 1].tpr);
        }
        CHECK(c.auc == Approx(trapezoid_area(c.points)).margin(1e-12));
        if (has_neg) CHECK(std::abs(c.auc - pairwise_auc(col, pos)) <= 1e-9);
      }
    }
  }

  SECTION("CSV layout") {
    const auto s = score_matrix({{0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}});
    const std::vector<RocCurve> curves{roc_one_vs_all(s, std::vector{AD, MCI}, AD)};
    const auto csv = roc_to_csv(curves);
    CHECK(csv.starts_with("class,fpr,tpr,threshold,auc\n"));
    CHECK(csv.find("AD,0,0,inf,1\n") != std::string::npos);
  }
}
