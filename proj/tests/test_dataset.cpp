#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "mrens/dataset.hpp"
#include "mrens/entropy_sampler.hpp"
#include "test_support.hpp"

using namespace mrens;
using mrens::testing::TempDir;

namespace {

std::vector<ScanRecord> cohort(std::size_t ad, std::size_t mci, std::size_t cn) {
  return synthetic_records({ad, mci, cn});
}

std::array<std::size_t, kNumClasses> per_class(const std::vector<ScanRecord>& records) {
  std::array<std::size_t, kNumClasses> n{};
  for (const auto& r : records) ++n[index_of(r.label)];
  return n;
}

std::set<std::string> ids_of(const std::vector<ScanRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.scan_id);
  return s;
}

double mean_entropy(const std::vector<Slice>& slices, std::size_t lo, std::size_t hi) {
  double sum = 0.0;
  for (std::size_t z = lo; z < hi; ++z) sum += slice_entropy(slices[z]);
  return sum / static_cast<double>(hi - lo);
}

}  // namespace

TEST_CASE("train_count rounds half up", "[dataset]") {
  CHECK(train_count(20, 0.75) == 15);
  CHECK(train_count(45, 0.75) == 34);  // 33.75
  CHECK(train_count(35, 0.75) == 26);  // 26.25
  CHECK(train_count(4, 0.75) == 3);
  CHECK(train_count(2, 0.75) == 2);  // 1.5
  CHECK(train_count(10, 0.25) == 3);  // 2.5
}

TEST_CASE("stratified_split", "[dataset]") {
  const auto records = cohort(20, 45, 35);

  SECTION("per-class counts") {
    const auto [train, test] = stratified_split(records, SplitConfig{0.75, 1});
    CHECK(per_class(train) == std::array<std::size_t, 3>{15, 34, 26});
    CHECK(per_class(test) == std::array<std::size_t, 3>{5, 11, 9});
  }

  SECTION("four records of one class") {
    const auto [train, test] = stratified_split(cohort(4, 0, 0), SplitConfig{0.75, 9});
    CHECK(train.size() == 3);
    CHECK(test.size() == 1);
  }

  SECTION("partition and determinism over seeds") {
    const auto all = ids_of(records);
    std::set<std::set<std::string>> distinct;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto [train, test] = stratified_split(records, SplitConfig{0.75, seed});
      const auto a = ids_of(train), b = ids_of(test);
      CHECK(a.size() + b.size() == records.size());
      std::set<std::string> both;
      std::ranges::set_union(a, b, std::inserter(both, both.end()));
      CHECK(both == all);
      CHECK(per_class(train) == std::array<std::size_t, 3>{15, 34, 26});
      CHECK(stratified_split(records, SplitConfig{0.75, seed}).first == train);
      distinct.insert(a);
    }
    CHECK(distinct.size() > 1);
  }

  SECTION("per-class fraction within 1/n of the request") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
      const auto r = cohort(2 + uniform_below(rng, 30), 2 + uniform_below(rng, 30), 2 + uniform_below(rng, 30));
      const double f = uniform(rng, 0.1, 0.9);
      const auto [train, test] = stratified_split(r, SplitConfig{f, static_cast<std::uint64_t>(t)});
      const auto n = per_class(r), k = per_class(train);
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(std::abs(static_cast<double>(k[c]) / static_cast<double>(n[c]) - f) <= 1.0 / static_cast<double>(n[c]));
    }
  }

  SECTION("errors") {
    CHECK_THROWS_WITH(stratified_split(cohort(1, 4, 4), SplitConfig{}), Catch::Matchers::ContainsSubstring("ClassTooSmall"));
    auto dup = cohort(3, 3, 3);
    dup.push_back(dup.front());
    CHECK_THROWS_WITH(stratified_split(dup, SplitConfig{}), Catch::Matchers::ContainsSubstring("DuplicateId"));
    CHECK_THROWS_AS(stratified_split(records, SplitConfig{1.0, 0}), Error);
  }
}

TEST_CASE("generate_volume", "[dataset]") {
  SECTION("central slices carry more entropy than the ends") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      for (auto label : kAllLabels) {
        const auto v = generate_volume(label, seed, kDefaultSyntheticExtents);
        const auto slices = extract_slices(v);
        const std::size_t nz = slices.size(), tenth = nz / 10;
        const double middle = mean_entropy(slices, nz / 3, 2 * nz / 3);
        const double head = mean_entropy(slices, 0, tenth);
        const double tail = mean_entropy(slices, nz - tenth, nz);
        CHECK(middle > head);
        CHECK(middle > tail);
      }
    }
  }

  SECTION("deterministic and class dependent") {
    const Extents e{16, 16, 20};
    const auto a = generate_volume(Label::AD, 42, e);
    CHECK(a.data() == generate_volume(Label::AD, 42, e).data());
    CHECK(a.data() != generate_volume(Label::AD, 43, e).data());
    const auto cn = generate_volume(Label::CN, 42, e);
    const auto mid_a = extract_slices(a)[10], mid_cn = extract_slices(cn)[10];
    CHECK(mid_a.pixels() != mid_cn.pixels());
  }

  CHECK_THROWS_WITH(generate_volume(Label::AD, 1, Extents{8, 7, 8}), Catch::Matchers::ContainsSubstring("BadExtents"));
}

TEST_CASE("generate_dataset and manifests", "[dataset]") {
  TempDir dir("dataset");
  const auto records = generate_dataset(dir.path(), kDefaultClassCounts, 3, Extents{12, 10, 9});
  CHECK(records.size() == 35);
  CHECK(per_class(records) == std::array<std::size_t, 3>{8, 14, 13});

  const auto manifest = dir / "manifest.csv";
  const auto loaded = load_manifest(manifest);
  CHECK(loaded == records);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "volumes")) files += e.is_regular_file();
  CHECK(files == 35);
  for (const auto& r : loaded) {
    const auto v = load_volume(resolve_record_path(r, manifest));
    CHECK(v.extents() == Extents{12, 10, 9});
    CHECK(v.source_id() == r.scan_id);
  }

  // Another root seed gives different volumes with the same layout.
  TempDir other("dataset2");
  generate_dataset(other.path(), {2, 2, 2}, 4, Extents{8, 8, 8});
  CHECK(load_manifest(other / "manifest.csv").size() == 6);

  std::ofstream(dir / "bad.csv") << "scan_id,label,path\nx,XYZ,x.nii\n";
  CHECK_THROWS_AS(load_manifest(dir / "bad.csv"), Error);
  std::ofstream(dir / "dup.csv") << "scan_id,label,path\nx,AD,x.nii\nx,CN,y.nii\n";
  CHECK_THROWS_WITH(load_manifest(dir / "dup.csv"), Catch::Matchers::ContainsSubstring("DuplicateId"));
}
