#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "mrens/error.hpp"

namespace mrens {

// Diagnostic classes, in the fixed index order used by every matrix and file.
enum class Label : int { AD = 0, MCI = 1, CN = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Label, kNumClasses> kAllLabels{Label::AD, Label::MCI, Label::CN};

constexpr std::size_t index_of(Label l) noexcept { return static_cast<std::size_t>(l); }

inline Label label_from_index(std::size_t i) {
  if (i >= kNumClasses) {
    throw Error("label", "BadLabel", "class index " + std::to_string(i) + " out of range");
  }
  return static_cast<Label>(i);
}

constexpr std::string_view to_string(Label l) noexcept {
  switch (l) {
    case Label::AD: return "AD";
    case Label::MCI: return "MCI";
    case Label::CN: return "CN";
  }
  return "?";
}

inline std::optional<Label> try_parse_label(std::string_view s) {
  for (Label l : kAllLabels) {
    if (s == to_string(l)) return l;
  }
  return std::nullopt;
}

inline Label parse_label(std::string_view s) {
  if (auto l = try_parse_label(s)) return *l;
  throw Error("label", "BadLabel", "unknown class '" + std::string(s) + "' (expected AD, MCI or CN)");
}

}  // namespace mrens
