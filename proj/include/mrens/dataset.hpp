#pragma once

// Scan manifests, stratified scan-level splitting, and a synthetic volume
// generator used in place of real MRI data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mrens/error.hpp"
#include "mrens/label.hpp"
#include "mrens/random.hpp"
#include "mrens/text.hpp"
#include "mrens/volume_io.hpp"

namespace mrens {

struct ScanRecord {
  std::string scan_id;
  Label label = Label::CN;
  std::filesystem::path path;

  friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

struct SplitConfig {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw Error("dataset", "BadConfig", "train_fraction must lie strictly between 0 and 1");
    }
  }
};

// floor(n * fraction), plus one when the fractional part is at least 0.5.
inline std::size_t train_count(std::size_t n, double fraction) {
  const double exact = static_cast<double>(n) * fraction;
  const double whole = std::floor(exact);
  return static_cast<std::size_t>(whole) + (exact - whole >= 0.5 ? 1 : 0);
}

// Per class: shuffle with the seed, send the first train_count() records to
// train. Both outputs keep the input order.
inline std::pair<std::vector<ScanRecord>, std::vector<ScanRecord>> stratified_split(
    std::span<const ScanRecord> records, const SplitConfig& config) {
  config.validate();
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.scan_id).second) {
      throw Error("dataset", "DuplicateId", "scan id '" + r.scan_id + "' appears twice");
    }
  }

  Rng rng(config.seed);
  std::vector<bool> to_train(records.size(), false);
  for (Label l : kAllLabels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].label == l) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw Error("dataset", "ClassTooSmall",
                  "class " + std::string(to_string(l)) + " has " + std::to_string(members.size()) +
                      " record(s); at least 2 are needed");
    }
    shuffle_in_place(members, rng);
    const std::size_t n_train = train_count(members.size(), config.train_fraction);
    for (std::size_t j = 0; j < n_train; ++j) to_train[members[j]] = true;
  }

  std::pair<std::vector<ScanRecord>, std::vector<ScanRecord>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (to_train[i] ? out.first : out.second).push_back(records[i]);
  }
  return out;
}

// ---- manifest files ---------------------------------------------------------

inline constexpr const char* kManifestHeader = "scan_id,label,path";

// Relative paths are written relative to the manifest's directory.
inline void save_manifest(std::span<const ScanRecord> records, const std::filesystem::path& path) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    out += r.scan_id + "," + std::string(to_string(r.label)) + "," + r.path.generic_string() + "\n";
  }
  text::write_file(path, out, "dataset");
}

// Relative record paths are resolved against the manifest's directory.
inline std::vector<ScanRecord> load_manifest(const std::filesystem::path& path) {
  const auto rows = text::read_csv(path, "dataset");
  if (rows.empty() || rows.front() != text::split(kManifestHeader)) {
    throw Error("dataset", "BadHeader", path.string() + ": expected header '" + kManifestHeader + "'");
  }
  std::vector<ScanRecord> out;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 3) throw Error("dataset", "BadRow", path.string() + ": line " + std::to_string(r + 1));
    if (!seen.insert(f[0]).second) throw Error("dataset", "DuplicateId", "scan id '" + f[0] + "' appears twice");
    ScanRecord rec{f[0], parse_label(f[1]), f[2]};
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::filesystem::path resolve_record_path(const ScanRecord& r, const std::filesystem::path& manifest) {
  if (r.path.is_absolute()) return r.path;
  return manifest.parent_path() / r.path;
}

// ---- synthetic volumes ------------------------------------------------------

// Shape of the synthetic scans. Each scan is an ellipsoidal "head" whose
// central slices carry a sinusoidal grating with a class-specific spatial
// frequency, buried in Gaussian noise. The first and last `background_fraction`
// of slices are dark except for sparse speckle.
struct GeneratorParams {
  double background_fraction = 0.2;
  double speckle_probability = 0.01;
  double tissue_level = 1.0;
  double grating_amplitude = 0.3;
  double noise_sigma = 1.5;
  double phase_jitter = 0.6;               // radians, uniform +/- per scan
  std::array<double, kNumClasses> cycles{3.0, 5.0, 7.0};  // across the x extent
};

inline constexpr Extents kMinGeneratedExtents{8, 8, 8};

inline Volume generate_volume(Label label, std::uint64_t seed, Extents extents,
                              const GeneratorParams& params = {}, std::string scan_id = {}) {
  if (extents.nx < kMinGeneratedExtents.nx || extents.ny < kMinGeneratedExtents.ny ||
      extents.nz < kMinGeneratedExtents.nz) {
    throw Error("dataset", "BadExtents", "synthetic volumes need extents of at least 8x8x8");
  }
  Rng rng(stage_seed(seed, 1000 + index_of(label)));
  const std::size_t nx = extents.nx, ny = extents.ny, nz = extents.nz;
  const auto bg = static_cast<std::size_t>(std::lround(params.background_fraction * static_cast<double>(nz)));
  const std::size_t head_lo = std::min(bg, nz / 2);
  const std::size_t head_hi = nz - head_lo;  // exclusive
  const double span_z = static_cast<double>(head_hi - head_lo);

  const double phase = uniform(rng, -params.phase_jitter, params.phase_jitter);
  const double omega = 2.0 * std::numbers::pi * params.cycles[index_of(label)] / static_cast<double>(nx);
  const double cx = (static_cast<double>(nx) - 1.0) / 2.0;
  const double cy = (static_cast<double>(ny) - 1.0) / 2.0;
  const double rx = 0.45 * static_cast<double>(nx);
  const double ry = 0.45 * static_cast<double>(ny);

  std::vector<double> data(extents.voxel_count(), 0.0);
  for (std::size_t z = 0; z < nz; ++z) {
    const bool inside_head = z >= head_lo && z < head_hi;
    // Cross-section shrinks towards the ends of the head.
    const double t = inside_head ? (static_cast<double>(z - head_lo) + 0.5) / span_z : 0.0;
    const double envelope = std::sin(std::numbers::pi * t);
    const double radius_scale = std::sqrt(std::max(envelope, 0.0));
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        double v = 0.0;
        if (inside_head) {
          const double dx = (static_cast<double>(x) - cx) / (rx * radius_scale);
          const double dy = (static_cast<double>(y) - cy) / (ry * radius_scale);
          const double noise = params.noise_sigma * standard_normal(rng);
          if (dx * dx + dy * dy <= 1.0) {
            const double grating = std::cos(omega * static_cast<double>(x) + phase);
            v = params.tissue_level + params.grating_amplitude * envelope * grating + noise;
          } else {
            v = 0.25 * noise;
          }
        } else if (uniform01(rng) < params.speckle_probability) {
          v = uniform01(rng);
        }
        data[x + nx * (y + ny * z)] = v;
      }
    }
  }
  return Volume(extents, {1.0, 1.0, 1.0}, std::move(data), std::move(scan_id));
}

// Table-of-classes sizes scaled down from a 77/145/129 cohort.
inline constexpr std::array<std::size_t, kNumClasses> kDefaultClassCounts{8, 14, 13};
inline constexpr Extents kDefaultSyntheticExtents{48, 48, 150};

inline std::string synthetic_scan_id(Label l, std::size_t ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", ordinal);
  return std::string(to_string(l)) + "_" + buf;
}

// In-memory records for the synthetic cohort (paths left relative, unwritten).
inline std::vector<ScanRecord> synthetic_records(const std::array<std::size_t, kNumClasses>& counts) {
  std::vector<ScanRecord> out;
  for (Label l : kAllLabels) {
    for (std::size_t i = 0; i < counts[index_of(l)]; ++i) {
      const auto id = synthetic_scan_id(l, i);
      out.push_back({id, l, std::filesystem::path("volumes") / (id + ".nii")});
    }
  }
  return out;
}

// Seed used for one synthetic scan, from the root seed and its position in
// the cohort.
inline std::uint64_t synthetic_scan_seed(std::uint64_t root, std::size_t ordinal) {
  return stage_seed(root, 5000 + ordinal);
}

// Writes volumes/<scan_id>.nii and manifest.csv under `out_dir`.
inline std::vector<ScanRecord> generate_dataset(const std::filesystem::path& out_dir,
                                                const std::array<std::size_t, kNumClasses>& counts,
                                                std::uint64_t seed, Extents extents = kDefaultSyntheticExtents,
                                                const GeneratorParams& params = {},
                                                Datatype datatype = Datatype::float32) {
  auto records = synthetic_records(counts);
  try {
    std::filesystem::create_directories(out_dir / "volumes");
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error("dataset", "IoFailure", e.what());
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto v = generate_volume(r.label, synthetic_scan_seed(seed, i), extents, params, r.scan_id);
    try {
      save_volume(v, out_dir / r.path, datatype);
    } catch (const Error& e) {
      throw Error("dataset", "IoFailure", e.what());
    }
  }
  save_manifest(records, out_dir / "manifest.csv");
  return records;
}

}  // namespace mrens
