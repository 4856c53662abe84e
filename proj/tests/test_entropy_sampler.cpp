#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mrens/entropy_sampler.hpp"
#include "mrens/random.hpp"

using namespace mrens;
using Catch::Approx;

namespace {

Slice constant_slice(double value, std::size_t index = 0, std::size_t h = 8, std::size_t w = 8) {
  return Slice(h, w, std::vector<double>(h * w, value), index);
}

Slice random_slice(Rng& rng, std::size_t index, std::size_t h = 6, std::size_t w = 7) {
  std::vector<double> px(h * w);
  // Integer-valued pixels keep affine transforms exact.
  const auto levels = 1 + uniform_below(rng, 40);
  for (auto& p : px) p = static_cast<double>(uniform_below(rng, levels));
  return Slice(h, w, std::move(px), index);
}

// Slice whose 256-bin histogram has the given per-bin counts: pixel value = bin
// index, with both extremes present so the min-max map is the identity on bins.
Slice slice_with_entropy_rank(std::size_t distinct_levels, std::size_t index) {
  std::vector<double> px(256, 0.0);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i % distinct_levels);
  return Slice(16, 16, std::move(px), index);
}

// Independent entropy: counts distinct values directly (valid when each
// distinct value falls in its own bin).
double entropy_of_values(const std::vector<double>& values) {
  std::map<double, double> freq;
  for (double v : values) freq[v] += 1.0;
  double h = 0.0;
  for (const auto& [v, c] : freq) {
    const double p = c / static_cast<double>(values.size());
    h -= p * std::log(p) / std::log(2.0);
  }
  return h;
}

}  // namespace

TEST_CASE("intensity_histogram binning", "[entropy_sampler]") {
  SECTION("constant slice lands in bin 0") {
    const auto h = intensity_histogram(constant_slice(3.7), 256);
    CHECK(h[0] == 64);
    CHECK(std::accumulate(h.begin() + 1, h.end(), std::uint64_t{0}) == 0);
  }

  SECTION("hand-binned four-pixel case") {
    // floor(v * 2): 0 -> 0, 0 -> 0, 0.5 -> 1, 1.0 -> 2 clamped to 1.
    const Slice s(2, 2, {0.0, 0.0, 0.5, 1.0});
    CHECK(intensity_histogram(s, 2) == std::vector<std::uint64_t>{2, 2});
    // Just below the midpoint stays in the lower bin.
    const Slice t(2, 2, {0.0, 0.0, 0.49, 1.0});
    CHECK(intensity_histogram(t, 2) == std::vector<std::uint64_t>{3, 1});
  }

  SECTION("counts sum to the pixel count") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      const auto s = random_slice(rng, 0);
      const auto h = intensity_histogram(s, 2 + uniform_below(rng, 300));
      CHECK(std::accumulate(h.begin(), h.end(), std::uint64_t{0}) == s.pixels().size());
    }
  }

  CHECK_THROWS_AS(intensity_histogram(constant_slice(1.0), 1), Error);
}

TEST_CASE("shannon_entropy", "[entropy_sampler]") {
  CHECK(shannon_entropy(std::vector<std::uint64_t>{0, 17, 0}) == 0.0);
  CHECK(shannon_entropy(std::vector<std::uint64_t>{5, 5}) == Approx(1.0).margin(1e-12));
  CHECK(shannon_entropy(std::vector<std::uint64_t>(256, 3)) == Approx(8.0).margin(1e-12));
  // 0.5*1 + 0.25*2 + 0.25*2
  CHECK(shannon_entropy(std::vector<std::uint64_t>{2, 1, 1}) == Approx(1.5).margin(1e-12));
  CHECK_THROWS_WITH(shannon_entropy(std::vector<std::uint64_t>{0, 0}), Catch::Matchers::ContainsSubstring("EmptyHistogram"));
}

TEST_CASE("entropy properties", "[entropy_sampler][property]") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_slice(rng, 0);
    const std::size_t bins = 2 + uniform_below(rng, 255);
    auto hist = intensity_histogram(s, bins);
    const double h = shannon_entropy(hist);
    CHECK(h >= 0.0);
    CHECK(h <= std::log2(static_cast<double>(bins)) + 1e-12);

    // Permuting bins leaves entropy unchanged.
    shuffle_in_place(hist, rng);
    CHECK(shannon_entropy(hist) == Approx(h).margin(1e-12));

    // Positive affine maps of the pixels leave the histogram unchanged.
    const double a = static_cast<double>(1 + uniform_below(rng, 8));
    const double b = static_cast<double>(uniform_below(rng, 100)) - 50.0;
    std::vector<double> px = s.pixels();
    for (auto& p : px) p = a * p + b;
    const Slice mapped(s.height(), s.width(), px);
    CHECK(intensity_histogram(mapped, bins) == intensity_histogram(s, bins));
  }
}

TEST_CASE("rank_slices", "[entropy_sampler]") {
  SECTION("descending entropy with index tie-break") {
    // levels 2 -> 1 bit, 8 -> 3 bits, 4 -> 2 bits
    const std::vector<Slice> s{slice_with_entropy_rank(2, 0), slice_with_entropy_rank(8, 1),
                               slice_with_entropy_rank(4, 2)};
    const auto r = rank_slices(s);
    REQUIRE(r.size() == 3);
    CHECK(r[0].index == 1);
    CHECK(r[1].index == 2);
    CHECK(r[2].index == 0);
    CHECK(r[0].entropy_bits == Approx(3.0).margin(1e-12));

    const std::vector<Slice> tied{slice_with_entropy_rank(4, 5), slice_with_entropy_rank(4, 2)};
    const auto rt = rank_slices(tied);
    CHECK(rt[0].index == 2);
    CHECK(rt[1].index == 5);
  }

  SECTION("matches an independent sort of independently computed entropies") {
    Rng rng(99);
    std::vector<Slice> slices;
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < 100; ++i) {
      // Fewer than 256 integer levels spanning [0, levels-1]: every level gets
      // its own bin, so entropy equals the entropy of the raw values.
      const auto levels = 2 + uniform_below(rng, 30);
      std::vector<double> px(64);
      for (auto& p : px) p = static_cast<double>(uniform_below(rng, levels));
      px[0] = 0.0;
      px[1] = static_cast<double>(levels - 1);
      oracle.emplace_back(-entropy_of_values(px), i);
      slices.emplace_back(8, 8, std::move(px), i);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first < b.first;
      return a.second < b.second;
    });
    const auto ranked = rank_slices(slices);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      CHECK(ranked[i].index == oracle[i].second);
      CHECK(ranked[i].entropy_bits == Approx(-oracle[i].first).margin(1e-12));
    }
  }
}

TEST_CASE("select_samples regimes", "[entropy_sampler]") {
  const std::vector<Slice> three{slice_with_entropy_rank(2, 0), slice_with_entropy_rank(8, 1),
                                 slice_with_entropy_rank(4, 2)};

  SECTION("max one is the argmax") {
    const auto s = select_samples(three, SampleSpec::max_one());
    REQUIRE(s.size() == 1);
    CHECK(s[0].index() == 1);
  }

  SECTION("top-k clamps to what is available and keeps entropy order") {
    const auto s = select_samples(three, SampleSpec::top(5));
    REQUIRE(s.size() == 3);
    CHECK(s[0].index() == 1);
    CHECK(s[1].index() == 2);
    CHECK(s[2].index() == 0);
  }

  SECTION("top-50 of 150 slices") {
    Rng rng(5);
    std::vector<Slice> many;
    for (std::size_t i = 0; i < 150; ++i) many.push_back(random_slice(rng, i));
    CHECK(select_samples(many, SampleSpec::top(50)).size() == 50);
  }

  SECTION("trimming 35 + 35 of 150 leaves indices 35..114") {
    std::vector<Slice> many;
    for (std::size_t i = 0; i < 150; ++i) many.push_back(constant_slice(1.0, i, 2, 2));
    SampleSpec spec = SampleSpec::all();
    spec.trim_head = 35;
    spec.trim_tail = 35;
    const auto s = select_samples(many, spec);
    REQUIRE(s.size() == 80);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].index() == 35 + i);
  }

  SECTION("trimming everything is an error") {
    SampleSpec spec = SampleSpec::all();
    spec.trim_head = 2;
    spec.trim_tail = 1;
    CHECK_THROWS_WITH(select_samples(three, spec), Catch::Matchers::ContainsSubstring("OverTrimmed"));
  }

  SECTION("top-k needs k >= 1") {
    CHECK_THROWS_WITH(select_samples(three, SampleSpec::top(0)), Catch::Matchers::ContainsSubstring("BadSpec"));
  }
}

TEST_CASE("regimes are nested", "[entropy_sampler][property]") {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    std::vector<Slice> slices;
    const std::size_t n = 5 + uniform_below(rng, 40);
    for (std::size_t i = 0; i < n; ++i) slices.push_back(random_slice(rng, i));
    SampleSpec base;
    base.trim_head = uniform_below(rng, 3);
    base.trim_tail = uniform_below(rng, 3);
    auto with = [&](SampleSpec s) {
      s.trim_head = base.trim_head;
      s.trim_tail = base.trim_tail;
      std::vector<std::size_t> idx;
      for (const auto& sl : select_samples(slices, s)) idx.push_back(sl.index());
      std::ranges::sort(idx);
      return idx;
    };
    const auto one = with(SampleSpec::max_one());
    const auto top = with(SampleSpec::top(1 + uniform_below(rng, n)));
    const auto all = with(SampleSpec::all());
    CHECK(std::ranges::includes(top, one));
    CHECK(std::ranges::includes(all, top));
  }
}

TEST_CASE("strategy names", "[entropy_sampler]") {
  CHECK(parse_strategy("max1").strategy == Strategy::max_one);
  CHECK(parse_strategy("all").strategy == Strategy::all);
  CHECK(parse_strategy("top50").k == 50);
  CHECK(parse_strategy("topk", 7).k == 7);
  CHECK(strategy_name(SampleSpec::top(50)) == "top50");
  CHECK_THROWS_AS(parse_strategy("best"), Error);
}
