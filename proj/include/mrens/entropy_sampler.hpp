#pragma once

// Slice scoring by intensity-histogram Shannon entropy and the three sampling
// regimes: the single max-entropy slice, the top-k slices, or every slice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrens/error.hpp"
#include "mrens/volume_io.hpp"

namespace mrens {

inline constexpr std::size_t kDefaultBinCount = 256;

struct SliceScore {
  std::size_t index = 0;
  double entropy_bits = 0.0;

  friend bool operator==(const SliceScore&, const SliceScore&) = default;
};

enum class Strategy { max_one, top_k, all };

struct SampleSpec {
  Strategy strategy = Strategy::top_k;
  std::size_t k = 50;  // used by top_k only
  std::size_t trim_head = 0;
  std::size_t trim_tail = 0;
  std::size_t bin_count = kDefaultBinCount;

  static SampleSpec max_one() { return {Strategy::max_one, 1}; }
  static SampleSpec top(std::size_t k) { return {Strategy::top_k, k}; }
  static SampleSpec all() { return {Strategy::all, 0}; }

  void validate() const {
    if (strategy == Strategy::top_k && k < 1) {
      throw Error("entropy_sampler", "BadSpec", "top-k sampling needs k >= 1");
    }
    if (bin_count < 2) {
      throw Error("entropy_sampler", "BadSpec", "bin_count must be at least 2");
    }
  }
};

// Parses "max1", "all", "top50" / "topk" style names. `k` is used for "topk".
inline SampleSpec parse_strategy(const std::string& name, std::size_t k = 50) {
  if (name == "max1" || name == "maxone" || name == "1") return SampleSpec::max_one();
  if (name == "all" || name == "ALL") return SampleSpec::all();
  if (name == "topk") return SampleSpec::top(k);
  if (name.starts_with("top") && name.size() > 3) {
    const auto digits = name.substr(3);
    if (std::ranges::all_of(digits, [](char c) { return c >= '0' && c <= '9'; })) {
      return SampleSpec::top(std::stoul(digits));
    }
  }
  throw Error("entropy_sampler", "BadSpec", "unknown sampling strategy '" + name + "'");
}

inline std::string strategy_name(const SampleSpec& spec) {
  switch (spec.strategy) {
    case Strategy::max_one: return "max1";
    case Strategy::top_k: return "top" + std::to_string(spec.k);
    case Strategy::all: return "all";
  }
  return "?";
}

// Min-max scales the slice onto [0, 1] and bins by floor(v * bins), with the
// top edge folded into the last bin. A constant slice lands entirely in bin 0.
inline std::vector<std::uint64_t> intensity_histogram(const Slice& slice,
                                                      std::size_t bin_count = kDefaultBinCount) {
  if (bin_count < 2) throw Error("entropy_sampler", "BadSpec", "bin_count must be at least 2");
  std::vector<std::uint64_t> hist(bin_count, 0);
  const auto& px = slice.pixels();
  if (px.empty()) return hist;
  const auto [lo_it, hi_it] = std::ranges::minmax_element(px);
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (range <= 0.0) {
    hist[0] = px.size();
    return hist;
  }
  const double bins = static_cast<double>(bin_count);
  for (double v : px) {
    const double scaled = (v - lo) / range;
    auto b = static_cast<std::size_t>(std::floor(scaled * bins));
    hist[std::min(b, bin_count - 1)] += 1;
  }
  return hist;
}

// H = -sum p log2 p over the nonzero bins.
inline double shannon_entropy(std::span<const std::uint64_t> hist) {
  std::uint64_t total = 0;
  for (auto c : hist) total += c;
  if (total == 0) throw Error("entropy_sampler", "EmptyHistogram", "histogram has no counts");
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h > 0.0 ? h : 0.0;
}

inline double slice_entropy(const Slice& slice, std::size_t bin_count = kDefaultBinCount) {
  return shannon_entropy(intensity_histogram(slice, bin_count));
}

// Scores every slice and sorts by descending entropy, lower index first on ties.
inline std::vector<SliceScore> rank_slices(std::span<const Slice> slices,
                                           std::size_t bin_count = kDefaultBinCount) {
  std::vector<SliceScore> scores;
  scores.reserve(slices.size());
  for (const auto& s : slices) scores.push_back({s.index(), slice_entropy(s, bin_count)});
  std::ranges::stable_sort(scores, [](const SliceScore& a, const SliceScore& b) {
    if (a.entropy_bits != b.entropy_bits) return a.entropy_bits > b.entropy_bits;
    return a.index < b.index;
  });
  return scores;
}

// Positions (into `slices`) chosen by `spec`. Trimming drops the trim_head
// lowest-index and trim_tail highest-index slices before selection.
inline std::vector<std::size_t> select_positions(std::span<const Slice> slices, const SampleSpec& spec) {
  spec.validate();
  if (slices.size() <= spec.trim_head + spec.trim_tail) {
    throw Error("entropy_sampler", "OverTrimmed",
                "trimming " + std::to_string(spec.trim_head) + "+" + std::to_string(spec.trim_tail) +
                    " leaves nothing of " + std::to_string(slices.size()) + " slices");
  }

  std::vector<std::size_t> by_index(slices.size());
  for (std::size_t i = 0; i < by_index.size(); ++i) by_index[i] = i;
  std::ranges::stable_sort(by_index, [&](std::size_t a, std::size_t b) {
    return slices[a].index() < slices[b].index();
  });
  std::vector<std::size_t> kept(by_index.begin() + static_cast<std::ptrdiff_t>(spec.trim_head),
                                by_index.end() - static_cast<std::ptrdiff_t>(spec.trim_tail));
  if (spec.strategy == Strategy::all) return kept;

  struct Scored {
    std::size_t pos;
    double entropy;
  };
  std::vector<Scored> scored;
  scored.reserve(kept.size());
  for (auto p : kept) scored.push_back({p, slice_entropy(slices[p], spec.bin_count)});
  std::ranges::stable_sort(scored, [&](const Scored& a, const Scored& b) {
    if (a.entropy != b.entropy) return a.entropy > b.entropy;
    return slices[a.pos].index() < slices[b.pos].index();
  });

  const std::size_t take = spec.strategy == Strategy::max_one ? 1 : std::min(spec.k, scored.size());
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].pos);
  return out;
}

// Max-one and top-k results come back in descending-entropy order; "all"
// returns the remaining slices in index order.
inline std::vector<Slice> select_samples(std::span<const Slice> slices, const SampleSpec& spec) {
  std::vector<Slice> out;
  for (auto p : select_positions(slices, spec)) out.push_back(slices[p]);
  return out;
}

}  // namespace mrens
