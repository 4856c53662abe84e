#pragma once

// Flat key-value pipeline configuration. Files use INI syntax:
//
//   seed = 7
//   [sampling]
//   strategy = top50
//
// and are flattened to "section.key" entries. TOML-style quoted strings are
// accepted. Later sources override earlier ones (file < environment < flags).

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mrens/mrens.hpp"

namespace mrens::cli {

inline constexpr const char* kWorkDirEnv = "MRENS_WORK_DIR";

enum class EnsembleMode { vote, stack, both };
enum class Granularity { slice, scan };

inline Granularity granularity_from_name(const std::string& s) {
  if (s == "slice") return Granularity::slice;
  if (s == "scan") return Granularity::scan;
  throw Error("cli", "UsageError", "granularity must be slice or scan, got '" + s + "'");
}

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path manifest;  // empty: generate a synthetic cohort
  std::filesystem::path work_dir = "mrens_work";
  std::array<std::size_t, kNumClasses> synth_counts = kDefaultClassCounts;
  Extents synth_extents = kDefaultSyntheticExtents;
  Axis axis = Axis::z;
  SampleSpec sampling = SampleSpec::top(50);
  PreprocessConfig preprocess{32, 32, Normalization::minmax};
  TrainConfig training;
  bool batch_size_set = false;
  std::size_t base_models = 3;
  SplitConfig split;
  EnsembleMode ensemble = EnsembleMode::both;
  std::size_t top_k = 3;
  Granularity granularity = Granularity::slice;
};

using ConfigMap = std::map<std::string, std::string>;

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline ConfigMap read_config_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("cli", "BadConfig", e.what());
  }
  ConfigMap out;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      out[key] = unquote(node.data());
    } else {
      for (const auto& [sub, leaf] : node) out[key + "." + sub] = unquote(leaf.data());
    }
  }
  return out;
}

// "key=value" as given to --set.
inline std::pair<std::string, std::string> parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error("cli", "UsageError", "--set expects key=value, got '" + s + "'");
  }
  return {std::string(text::trim(s.substr(0, eq))), unquote(std::string(text::trim(s.substr(eq + 1))))};
}

namespace detail {

template <std::size_t N>
std::array<std::size_t, N> parse_size_list(const std::string& s, const std::string& key) {
  const auto parts = text::split(s);
  if (parts.size() != N) {
    throw Error("cli", "BadConfig", key + " needs " + std::to_string(N) + " comma-separated values");
  }
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const auto v = text::parse_int(parts[i], "cli");
    if (v < 0) throw Error("cli", "BadConfig", key + " values must be nonnegative");
    out[i] = static_cast<std::size_t>(v);
  }
  return out;
}

inline std::size_t to_count(const std::string& v, const std::string& key) {
  const auto n = text::parse_int(v, "cli");
  if (n < 0) throw Error("cli", "BadConfig", key + " must be nonnegative");
  return static_cast<std::size_t>(n);
}

}  // namespace detail

inline PipelineConfig build_config(const ConfigMap& entries) {
  PipelineConfig c;
  std::string strategy = "top50";
  std::size_t k = 50;
  bool k_given = false;
  for (const auto& [key, value] : entries) {
    if (key == "seed") c.seed = static_cast<std::uint64_t>(text::parse_int(value, "cli"));
    else if (key == "paths.manifest") c.manifest = value;
    else if (key == "paths.work_dir") c.work_dir = value;
    else if (key == "synth.counts") c.synth_counts = detail::parse_size_list<kNumClasses>(value, key);
    else if (key == "synth.extents") {
      const auto e = detail::parse_size_list<3>(value, key);
      c.synth_extents = {e[0], e[1], e[2]};
    }
    else if (key == "sampling.strategy") strategy = value;
    else if (key == "sampling.k") { k = detail::to_count(value, key); k_given = true; }
    else if (key == "sampling.trim_head") c.sampling.trim_head = detail::to_count(value, key);
    else if (key == "sampling.trim_tail") c.sampling.trim_tail = detail::to_count(value, key);
    else if (key == "sampling.bins") c.sampling.bin_count = detail::to_count(value, key);
    else if (key == "sampling.axis") c.axis = axis_from_name(value);
    else if (key == "preprocess.height") c.preprocess.height = detail::to_count(value, key);
    else if (key == "preprocess.width") c.preprocess.width = detail::to_count(value, key);
    else if (key == "preprocess.normalization") c.preprocess.normalization = normalization_from_name(value);
    else if (key == "training.epochs") c.training.epochs = detail::to_count(value, key);
    else if (key == "training.learning_rate") c.training.learning_rate = text::parse_double(value, "cli");
    else if (key == "training.batch_size") {
      if (value != "auto") {
        c.training.batch_size = detail::to_count(value, key);
        c.batch_size_set = true;
      }
    }
    else if (key == "training.base_models") c.base_models = detail::to_count(value, key);
    else if (key == "split.train_fraction") c.split.train_fraction = text::parse_double(value, "cli");
    else if (key == "ensemble.method") {
      if (value == "vote") c.ensemble = EnsembleMode::vote;
      else if (value == "stack") c.ensemble = EnsembleMode::stack;
      else if (value == "both") c.ensemble = EnsembleMode::both;
      else throw Error("cli", "BadConfig", "ensemble.method must be vote, stack or both");
    }
    else if (key == "ensemble.top_k") c.top_k = detail::to_count(value, key);
    else if (key == "evaluation.granularity") c.granularity = granularity_from_name(value);
    else throw Error("cli", "BadConfig", "unknown config key '" + key + "'");
  }

  const auto trim_head = c.sampling.trim_head, trim_tail = c.sampling.trim_tail, bins = c.sampling.bin_count;
  c.sampling = parse_strategy(strategy, k);
  if (k_given && c.sampling.strategy == Strategy::top_k) c.sampling.k = k;
  c.sampling.trim_head = trim_head;
  c.sampling.trim_tail = trim_tail;
  c.sampling.bin_count = bins;
  c.sampling.validate();
  c.preprocess.validate();
  if (!c.batch_size_set) c.training.batch_size = c.sampling.strategy == Strategy::max_one ? 2 : 16;
  c.training.validate();
  c.split.validate();
  if (c.base_models < 3) throw Error("cli", "BadConfig", "training.base_models must be at least 3");
  if (c.top_k != kVoters) throw Error("cli", "BadConfig", "ensemble.top_k must be 3 (2-of-3 voting)");
  c.split.seed = stage_seed(c.seed, 1);
  return c;
}

}  // namespace mrens::cli
