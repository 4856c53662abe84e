#pragma once

// Implementations of the mrens subcommands. Each command reads and writes
// only the documented file formats, so they can be chained by hand or by
// run_pipeline().

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mrens/mrens.hpp"
#include "pipeline_config.hpp"

namespace mrens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline void write_json(const fs::path& path, const json& j) { text::write_file(path, j.dump(1) + "\n", "cli"); }

// ---- shared helpers ---------------------------------------------------------

// "id=path" names the model explicitly; otherwise the id is the file name up
// to its first '.', so "base1.test.csv" belongs to model "base1".
inline PredictionMatrix load_named_predictions(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return load_predictions(arg.substr(eq + 1), arg.substr(0, eq));
  const auto name = fs::path(arg).filename().string();
  return load_predictions(arg, name.substr(0, name.find('.')));
}

inline std::vector<PredictionMatrix> load_named_predictions(const std::vector<std::string>& args) {
  std::vector<PredictionMatrix> out;
  for (const auto& a : args) out.push_back(load_named_predictions(a));
  return out;
}

inline std::unordered_map<std::string, Label> label_lookup(const std::vector<ScanRecord>& records) {
  std::unordered_map<std::string, Label> out;
  for (const auto& r : records) out.emplace(r.scan_id, r.label);
  return out;
}

// True labels for slice ("scan:index") or scan ids.
inline std::vector<Label> labels_for(const std::vector<std::string>& ids,
                                     const std::unordered_map<std::string, Label>& lookup) {
  std::vector<Label> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = lookup.find(scan_of(id));
    if (it == lookup.end()) throw Error("cli", "UnknownSample", "sample '" + id + "' has no scan in the manifest");
    out.push_back(it->second);
  }
  return out;
}

inline PredictionMatrix at_granularity(const PredictionMatrix& pm, Granularity g) {
  return g == Granularity::scan ? aggregate_by_scan(pm) : pm;
}

// Copies records into a manifest stored at `path`, rewriting relative volume
// paths so they stay valid from the new location.
inline void save_rebased_manifest(const std::vector<ScanRecord>& records, const fs::path& source_manifest,
                                  const fs::path& path) {
  std::vector<ScanRecord> out;
  const auto target_dir = fs::absolute(path).parent_path();
  for (auto r : records) {
    if (!r.path.is_absolute()) {
      r.path = fs::absolute(resolve_record_path(r, source_manifest)).lexically_normal().lexically_relative(target_dir);
    }
    out.push_back(std::move(r));
  }
  save_manifest(out, path);
}

// ---- features CSV -----------------------------------------------------------

struct FeatureTable {
  std::vector<std::string> scan_ids;
  std::vector<std::size_t> slice_indices;
  Matrix features;

  std::vector<std::string> sample_ids() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scan_ids.size(); ++i) out.push_back(slice_sample_id(scan_ids[i], slice_indices[i]));
    return out;
  }

  // Rows whose scan appears in `keep`, in file order.
  FeatureTable subset(const std::unordered_map<std::string, Label>& keep) const {
    FeatureTable t;
    t.features = Matrix(0, features.cols());
    for (std::size_t i = 0; i < scan_ids.size(); ++i) {
      if (!keep.contains(scan_ids[i])) continue;
      t.scan_ids.push_back(scan_ids[i]);
      t.slice_indices.push_back(slice_indices[i]);
      t.features.append_row(features.row(i));
    }
    return t;
  }
};

inline FeatureTable load_features(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("preprocess", "IoFailure", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("scan_id,slice_index,")) {
    throw Error("preprocess", "BadHeader", path.string() + ": expected features header");
  }
  const std::size_t width = text::split(line).size() - 2;
  FeatureTable t;
  t.features = Matrix(0, width);
  std::vector<double> row(width);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    if (f.size() != width + 2) {
      throw Error("preprocess", "BadRow", path.string() + ": line " + std::to_string(lineno) + " has wrong width");
    }
    t.scan_ids.push_back(f[0]);
    t.slice_indices.push_back(static_cast<std::size_t>(text::parse_int(f[1], "preprocess")));
    for (std::size_t j = 0; j < width; ++j) row[j] = text::parse_double(f[j + 2], "preprocess");
    t.features.append_row(row);
  }
  return t;
}

// ---- synth ------------------------------------------------------------------

struct SynthOptions {
  fs::path out_dir;
  std::array<std::size_t, kNumClasses> counts = kDefaultClassCounts;
  Extents extents = kDefaultSyntheticExtents;
  Datatype datatype = Datatype::float32;
  std::uint64_t seed = 0;
};

inline std::vector<ScanRecord> run_synth(const SynthOptions& o) {
  auto records = generate_dataset(o.out_dir, o.counts, o.seed, o.extents, {}, o.datatype);
  std::cout << "wrote " << records.size() << " volumes and " << (o.out_dir / "manifest.csv").string() << "\n";
  return records;
}

// ---- inspect ----------------------------------------------------------------

inline json run_inspect(const fs::path& input) {
  const auto h = load_header(input);
  const auto v = load_volume(input);
  const auto [lo, hi] = std::ranges::minmax_element(v.data());
  double mean = 0.0;
  for (double x : v.data()) mean += x;
  mean /= static_cast<double>(v.data().size());
  json dims = json::array();
  for (int i = 0; i <= h.dim[0]; ++i) dims.push_back(h.dim[i]);
  json pixdim = json::array();
  for (int i = 1; i <= std::min<int>(h.dim[0], 7); ++i) pixdim.push_back(text::round6(h.pixdim[i]));
  json j = {{"file", input.filename().string()},
            {"endianness", h.endianness == Endianness::little ? "little" : "big"},
            {"datatype", datatype_name(h.datatype)},
            {"bitpix", h.bitpix},
            {"dim", dims},
            {"pixdim", pixdim},
            {"vox_offset", h.vox_offset},
            {"scl_slope", text::round6(h.scl_slope)},
            {"scl_inter", text::round6(h.scl_inter)},
            {"qform_code", h.qform_code},
            {"sform_code", h.sform_code},
            {"intensity", {{"min", text::round6(*lo)}, {"max", text::round6(*hi)}, {"mean", text::round6(mean)}}}};
  std::cout << j.dump(1) << "\n";
  return j;
}

// ---- sample -----------------------------------------------------------------

struct SampleOptions {
  fs::path manifest;
  std::vector<fs::path> inputs;  // alternative to a manifest
  SampleSpec spec = SampleSpec::top(50);
  Axis axis = Axis::z;
  fs::path out;
};

inline void run_sample(const SampleOptions& o) {
  std::vector<std::pair<std::string, fs::path>> scans;
  if (!o.manifest.empty()) {
    for (const auto& r : load_manifest(o.manifest)) scans.emplace_back(r.scan_id, resolve_record_path(r, o.manifest));
  }
  for (const auto& p : o.inputs) scans.emplace_back(std::string(), p);
  if (scans.empty()) throw Error("cli", "UsageError", "sample needs --manifest or --input");

  std::string out = "scan_id,slice_index,entropy_bits,selected\n";
  std::size_t total_selected = 0;
  for (auto& [id, path] : scans) {
    const auto volume = load_volume(path);
    if (id.empty()) id = volume.source_id();
    const auto slices = extract_slices(volume, o.axis);
    const auto chosen = select_positions(slices, o.spec);
    std::vector<bool> selected(slices.size(), false);
    for (auto p : chosen) selected[p] = true;
    total_selected += chosen.size();
    for (std::size_t i = 0; i < slices.size(); ++i) {
      out += id + "," + std::to_string(slices[i].index()) + "," +
             text::fmt(slice_entropy(slices[i], o.spec.bin_count)) + "," + (selected[i] ? "1" : "0") + "\n";
    }
  }
  text::write_file(o.out, out, "cli");
  std::cout << "selected " << total_selected << " slices from " << scans.size() << " scans ("
            << strategy_name(o.spec) << ")\n";
}

// scan_id -> selected slice indices.
inline std::map<std::string, std::set<std::size_t>> load_selection(const fs::path& path) {
  const auto rows = text::read_csv(path, "entropy_sampler");
  if (rows.empty() || rows.front() != text::split("scan_id,slice_index,entropy_bits,selected")) {
    throw Error("entropy_sampler", "BadHeader", path.string() + ": expected sample manifest header");
  }
  std::map<std::string, std::set<std::size_t>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 4) throw Error("entropy_sampler", "BadRow", path.string() + ": line " + std::to_string(r + 1));
    auto& set = out[f[0]];
    if (f[3] == "1") set.insert(static_cast<std::size_t>(text::parse_int(f[1], "entropy_sampler")));
  }
  return out;
}

// ---- preprocess -------------------------------------------------------------

struct PreprocessOptions {
  fs::path manifest;
  fs::path samples;  // optional; every slice when empty
  PreprocessConfig config;
  Axis axis = Axis::z;
  fs::path out;
};

inline void run_preprocess(const PreprocessOptions& o) {
  o.config.validate();
  const auto records = load_manifest(o.manifest);
  std::map<std::string, std::set<std::size_t>> selection;
  if (!o.samples.empty()) selection = load_selection(o.samples);

  std::ofstream out(o.out, std::ios::binary);
  if (!out) throw Error("cli", "IoFailure", "cannot write " + o.out.string());
  out << "scan_id,slice_index";
  for (std::size_t j = 0; j < o.config.height * o.config.width; ++j) out << ",px_" << j;
  out << "\n";

  std::size_t rows = 0;
  std::string line;
  for (const auto& r : records) {
    const std::set<std::size_t>* keep = nullptr;
    if (!o.samples.empty()) {
      auto it = selection.find(r.scan_id);
      if (it == selection.end()) continue;
      keep = &it->second;
    }
    const auto volume = load_volume(resolve_record_path(r, o.manifest));
    for (const auto& s : extract_slices(volume, o.axis)) {
      if (keep && !keep->contains(s.index())) continue;
      const auto features = flatten_features(preprocess_slice(s, o.config));
      line = r.scan_id + "," + std::to_string(s.index());
      for (double v : features) {
        line += ',';
        line += text::fmt(v);
      }
      line += '\n';
      out << line;
      ++rows;
    }
  }
  if (!out) throw Error("cli", "IoFailure", "write failed for " + o.out.string());

  write_json(fs::path(o.out.string() + ".json"),
             {{"height", o.config.height},
              {"width", o.config.width},
              {"normalization", normalization_name(o.config.normalization)},
              {"interpolation", "bilinear-half-pixel"},
              {"rows", rows}});
  std::cout << "wrote " << rows << " feature rows to " << o.out.string() << "\n";
}

// ---- split ------------------------------------------------------------------

struct SplitOptions {
  fs::path manifest;
  SplitConfig config;
  fs::path train_out;
  fs::path test_out;
};

inline void run_split(const SplitOptions& o) {
  const auto records = load_manifest(o.manifest);
  const auto [train, test] = stratified_split(records, o.config);
  save_rebased_manifest(train, o.manifest, o.train_out);
  save_rebased_manifest(test, o.manifest, o.test_out);
  std::cout << "train " << train.size() << " scans, test " << test.size() << " scans\n";
}

// ---- train-base / predict / ingest -----------------------------------------

struct TrainBaseOptions {
  fs::path features;
  fs::path manifest;
  TrainConfig config;
  fs::path out;
};

inline void run_train_base(const TrainBaseOptions& o) {
  const auto lookup = label_lookup(load_manifest(o.manifest));
  const auto table = load_features(o.features).subset(lookup);
  const auto labels = labels_for(table.sample_ids(), lookup);
  const auto model = train(table.features, labels, o.config);
  save_model(model, o.config, o.out);
  std::cout << "trained on " << labels.size() << " samples, final loss "
            << text::fmt(mean_cross_entropy(model, table.features, labels)) << "\n";
}

struct PredictOptions {
  fs::path model;
  fs::path features;
  fs::path manifest;  // optional row filter
  std::string model_id;
  fs::path out;
};

inline void run_predict(const PredictOptions& o) {
  const auto model = load_model(o.model);
  auto table = load_features(o.features);
  if (!o.manifest.empty()) table = table.subset(label_lookup(load_manifest(o.manifest)));
  const auto id = o.model_id.empty() ? o.model.stem().string() : o.model_id;
  save_predictions(predict_proba(model, table.features, table.sample_ids(), id), o.out);
  std::cout << "wrote " << table.features.rows() << " predictions to " << o.out.string() << "\n";
}

inline void run_ingest(const fs::path& input, const fs::path& out) {
  const auto pm = load_predictions(input);
  save_predictions(pm, out);
  std::cout << "ingested " << pm.size() << " rows from " << input.string() << "\n";
}

// ---- select-top -------------------------------------------------------------

struct SelectOptions {
  std::vector<std::string> predictions;
  fs::path manifest;
  std::size_t k = 3;
  Granularity granularity = Granularity::slice;
  fs::path out;
};

inline std::vector<std::string> run_select_top(const SelectOptions& o) {
  const auto lookup = label_lookup(load_manifest(o.manifest));
  std::map<std::string, double> recalls;
  for (const auto& pm : load_named_predictions(o.predictions)) {
    const auto p = at_granularity(pm, o.granularity);
    const auto report = evaluate(labels_for(p.ids(), lookup), p.predicted_labels());
    if (!recalls.emplace(pm.model_id(), report.macro.recall).second) {
      throw Error("ensemble", "IdMismatch", "model id '" + pm.model_id() + "' given twice");
    }
  }
  const auto chosen = select_top_k_models(recalls, o.k);
  json r = json::object();
  for (const auto& [id, rec] : recalls) r[id] = text::round6(rec);
  if (!o.out.empty()) write_json(o.out, {{"metric", "macro_recall"}, {"recalls", r}, {"selected", chosen}});
  for (const auto& id : chosen) std::cout << id << "\n";
  return chosen;
}

// ---- stack ------------------------------------------------------------------

struct StackOptions {
  std::vector<std::string> train_predictions;
  fs::path labels;  // manifest providing training labels
  std::vector<std::string> predict;
  TrainConfig config;
  fs::path out;
  fs::path model_out;
};

inline void run_stack(const StackOptions& o) {
  const auto lookup = label_lookup(load_manifest(o.labels));
  const auto train_bases = load_named_predictions(o.train_predictions);
  const auto labels = labels_for(train_bases.at(0).ids(), lookup);
  const auto model = stack_train(train_bases, labels, o.config);
  if (!o.model_out.empty()) save_stacking_model(model, o.config, o.model_out);
  if (!o.predict.empty()) {
    save_predictions(stack_predict(model, load_named_predictions(o.predict)), o.out);
    std::cout << "wrote stacked predictions to " << o.out.string() << "\n";
  }
}

// ---- vote -------------------------------------------------------------------

struct VoteOptions {
  std::vector<std::string> predictions;
  fs::path out;
  fs::path scores_out;  // optional mean-softmax scores for ROC
};

inline double run_vote(const VoteOptions& o) {
  const auto bases = load_named_predictions(o.predictions);
  const auto results = majority_vote(bases);
  text::write_file(o.out, votes_to_csv(results), "cli");
  if (!o.scores_out.empty()) save_predictions(mean_scores(bases), o.scores_out);
  const double ties = tie_fraction(results);
  std::cout << "voted " << results.size() << " samples, tie fraction " << text::fmt(ties) << "\n";
  return ties;
}

// ---- eval / roc -------------------------------------------------------------

struct EvalOptions {
  fs::path predictions;
  fs::path votes;
  fs::path manifest;
  Granularity granularity = Granularity::slice;
  fs::path out_json;
  fs::path out_confusion;
};

inline MetricsReport run_eval(const EvalOptions& o) {
  const auto lookup = label_lookup(load_manifest(o.manifest));
  std::vector<std::string> ids;
  std::vector<Label> pred;
  json extra = json::object();
  if (!o.votes.empty()) {
    if (o.granularity == Granularity::scan) {
      throw Error("cli", "UsageError", "vote files are evaluated as given; vote on scan-level predictions instead");
    }
    const auto votes = load_votes(o.votes);
    for (const auto& v : votes) {
      ids.push_back(v.id);
      pred.push_back(v.decision);
    }
    extra["tie_fraction"] = text::round6(tie_fraction(votes));
  } else if (!o.predictions.empty()) {
    const auto pm = at_granularity(load_predictions(o.predictions), o.granularity);
    ids = pm.ids();
    pred = pm.predicted_labels();
  } else {
    throw Error("cli", "UsageError", "eval needs --predictions or --votes");
  }
  const auto report = evaluate(labels_for(ids, lookup), pred);
  auto j = to_json(report);
  j["granularity"] = o.granularity == Granularity::slice ? "slice" : "scan";
  for (const auto& [k, v] : extra.items()) j[k] = v;
  if (!o.out_json.empty()) write_json(o.out_json, j);
  if (!o.out_confusion.empty()) text::write_file(o.out_confusion, confusion_to_csv(report.confusion), "cli");
  std::cout << "accuracy " << text::fmt(report.accuracy) << ", macro precision " << text::fmt(report.macro.precision)
            << ", macro recall " << text::fmt(report.macro.recall) << "\n";
  return report;
}

struct RocOptions {
  fs::path predictions;
  fs::path manifest;
  Granularity granularity = Granularity::slice;
  fs::path out;
};

// Classes with no true samples are skipped.
inline std::vector<RocCurve> run_roc(const RocOptions& o) {
  const auto lookup = label_lookup(load_manifest(o.manifest));
  const auto pm = at_granularity(load_predictions(o.predictions), o.granularity);
  const auto truth = labels_for(pm.ids(), lookup);
  std::vector<RocCurve> curves;
  for (Label l : kAllLabels) {
    if (std::ranges::find(truth, l) == truth.end()) continue;
    curves.push_back(roc_one_vs_all(pm, truth, l));
  }
  text::write_file(o.out, roc_to_csv(curves), "cli");
  for (const auto& c : curves) std::cout << "AUC " << to_string(c.positive) << " " << text::fmt(c.auc) << "\n";
  return curves;
}

// ---- pipeline ---------------------------------------------------------------

inline void run_pipeline(const PipelineConfig& c) {
  const fs::path w = c.work_dir;
  fs::create_directories(w);

  fs::path manifest = c.manifest;
  if (manifest.empty()) {
    run_synth({w / "data", c.synth_counts, c.synth_extents, Datatype::float32, stage_seed(c.seed, 0)});
    manifest = w / "data" / "manifest.csv";
  }

  const fs::path train_m = w / "split" / "train.csv";
  const fs::path test_m = w / "split" / "test.csv";
  run_split({manifest, c.split, train_m, test_m});

  run_sample({manifest, {}, c.sampling, c.axis, w / "samples.csv"});
  run_preprocess({manifest, w / "samples.csv", c.preprocess, c.axis, w / "features.csv"});

  std::vector<std::string> base_ids;
  std::vector<std::string> test_files;
  for (std::size_t i = 1; i <= c.base_models; ++i) {
    const auto id = "base" + std::to_string(i);
    TrainConfig tc = c.training;
    tc.seed = stage_seed(c.seed, 100 + i);
    run_train_base({w / "features.csv", train_m, tc, w / "models" / (id + ".json")});
    run_predict({w / "models" / (id + ".json"), w / "features.csv", train_m, id,
                 w / "predictions" / (id + ".train.csv")});
    run_predict({w / "models" / (id + ".json"), w / "features.csv", test_m, id,
                 w / "predictions" / (id + ".test.csv")});
    base_ids.push_back(id);
    test_files.push_back((w / "predictions" / (id + ".test.csv")).string());
  }

  auto evaluate_all = [&](const std::string& name, const fs::path& preds) {
    run_eval({preds, {}, test_m, c.granularity, w / "metrics" / (name + ".json"),
              w / "metrics" / (name + ".confusion.csv")});
    run_roc({preds, test_m, c.granularity, w / "metrics" / (name + ".roc.csv")});
  };
  for (std::size_t i = 0; i < base_ids.size(); ++i) evaluate_all(base_ids[i], test_files[i]);

  const auto selected = run_select_top({test_files, test_m, c.top_k, c.granularity, w / "selection.json"});
  auto files_for = [&](const std::string& split) {
    std::vector<std::string> out;
    for (const auto& id : selected) out.push_back(id + "=" + (w / "predictions" / (id + "." + split + ".csv")).string());
    return out;
  };

  json summary = {{"seed", c.seed},
                  {"sampling", strategy_name(c.sampling)},
                  {"granularity", c.granularity == Granularity::slice ? "slice" : "scan"},
                  {"selected", selected}};

  if (c.ensemble != EnsembleMode::vote) {
    TrainConfig tc = c.training;
    tc.seed = stage_seed(c.seed, 200);
    run_stack({files_for("train"), train_m, files_for("test"), tc, w / "predictions" / "stack.test.csv",
               w / "models" / "stack.json"});
    evaluate_all("stack", w / "predictions" / "stack.test.csv");
  }

  if (c.ensemble != EnsembleMode::stack) {
    auto voters = files_for("test");
    if (c.granularity == Granularity::scan) {
      // Vote on scan-level (slice-averaged) base predictions.
      std::vector<std::string> scan_files;
      for (const auto& id : selected) {
        const auto scan_path = w / "predictions" / (id + ".test.scan.csv");
        save_predictions(aggregate_by_scan(load_predictions(w / "predictions" / (id + ".test.csv"), id)), scan_path);
        scan_files.push_back(id + "=" + scan_path.string());
      }
      voters = scan_files;
    }
    const double ties = run_vote({voters, w / "votes.csv", w / "predictions" / "vote_scores.test.csv"});
    run_eval({{}, w / "votes.csv", test_m, Granularity::slice, w / "metrics" / "vote.json",
              w / "metrics" / "vote.confusion.csv"});
    run_roc({w / "predictions" / "vote_scores.test.csv", test_m, Granularity::slice, w / "metrics" / "vote.roc.csv"});
    summary["vote_tie_fraction"] = text::round6(ties);
  }

  write_json(w / "summary.json", summary);
  std::cout << "pipeline outputs in " << w.string() << "\n";
}

}  // namespace mrens::cli
