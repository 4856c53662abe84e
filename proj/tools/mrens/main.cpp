// mrens: entropy-sampled slice classification with voting and stacking
// ensembles. Run `mrens --help` for the list of subcommands.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "pipeline_config.hpp"

namespace {

using namespace mrens;
using namespace mrens::cli;

struct TrainFlags {
  std::size_t epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 16;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "SGD epochs")->capture_default_str();
    app->add_option("--lr", learning_rate, "learning rate")->capture_default_str();
    app->add_option("--batch-size", batch_size, "mini-batch size")->capture_default_str();
  }
  TrainConfig config(std::uint64_t seed) const { return {epochs, learning_rate, batch_size, seed}; }
};

Granularity parse_granularity(const std::string& s) { return granularity_from_name(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrens: entropy-based slice sampling and ensemble classification of NIfTI volumes"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path;
  app.add_option("--seed", seed, "root random seed")->capture_default_str();
  app.add_option("--config", config_path, "pipeline config file (INI sections)");

  // synth
  SynthOptions synth;
  std::vector<std::size_t> synth_counts{kDefaultClassCounts.begin(), kDefaultClassCounts.end()};
  std::vector<std::size_t> synth_extents{kDefaultSyntheticExtents.nx, kDefaultSyntheticExtents.ny,
                                         kDefaultSyntheticExtents.nz};
  std::string synth_dtype = "float32";
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic cohort of NIfTI volumes + manifest");
  c_synth->add_option("--out", synth.out_dir, "output directory")->required();
  c_synth->add_option("--counts", synth_counts, "scans per class AD MCI CN")->expected(3)->delimiter(',');
  c_synth->add_option("--extents", synth_extents, "volume extents nx ny nz")->expected(3)->delimiter(',');
  c_synth->add_option("--datatype", synth_dtype, "uint8|int16|int32|float32|float64")->capture_default_str();

  // inspect
  std::string inspect_input;
  auto* c_inspect = app.add_subcommand("inspect", "print a NIfTI header as JSON");
  c_inspect->add_option("input", inspect_input, "volume file (.nii or .nii.gz)")->required();

  // sample
  SampleOptions sample;
  std::string sample_strategy = "top50", sample_axis = "z";
  std::size_t sample_k = 50;
  std::vector<std::string> sample_inputs;
  auto* c_sample = app.add_subcommand("sample", "score slices by entropy and mark the selected ones");
  c_sample->add_option("--manifest", sample.manifest, "scan manifest CSV");
  c_sample->add_option("--input", sample_inputs, "volume file(s) instead of a manifest");
  c_sample->add_option("--strategy", sample_strategy, "max1 | top<k> | topk | all")->capture_default_str();
  c_sample->add_option("--k", sample_k, "k for --strategy topk")->capture_default_str();
  c_sample->add_option("--trim-head", sample.spec.trim_head, "drop this many leading slices");
  c_sample->add_option("--trim-tail", sample.spec.trim_tail, "drop this many trailing slices");
  c_sample->add_option("--bins", sample.spec.bin_count, "histogram bins")->capture_default_str();
  c_sample->add_option("--axis", sample_axis, "slicing axis x|y|z")->capture_default_str();
  c_sample->add_option("--out", sample.out, "output CSV")->required();

  // preprocess
  PreprocessOptions prep;
  std::string prep_norm = "minmax", prep_axis = "z";
  auto* c_prep = app.add_subcommand("preprocess", "resize + normalise selected slices into a features CSV");
  c_prep->add_option("--manifest", prep.manifest, "scan manifest CSV")->required();
  c_prep->add_option("--samples", prep.samples, "sample CSV from `sample` (default: every slice)");
  c_prep->add_option("--height", prep.config.height, "target height")->capture_default_str();
  c_prep->add_option("--width", prep.config.width, "target width")->capture_default_str();
  c_prep->add_option("--normalization", prep_norm, "minmax | zscore")->capture_default_str();
  c_prep->add_option("--axis", prep_axis, "slicing axis x|y|z")->capture_default_str();
  c_prep->add_option("--out", prep.out, "output features CSV")->required();

  // split
  SplitOptions split;
  std::string split_train = "train.csv", split_test = "test.csv";
  auto* c_split = app.add_subcommand("split", "stratified scan-level train/test split");
  c_split->add_option("--manifest", split.manifest, "scan manifest CSV")->required();
  c_split->add_option("--fraction", split.config.train_fraction, "train fraction")->capture_default_str();
  c_split->add_option("--train-out", split.train_out, "train manifest")->required();
  c_split->add_option("--test-out", split.test_out, "test manifest")->required();

  // train-base
  TrainBaseOptions tb;
  TrainFlags tb_flags;
  auto* c_train = app.add_subcommand("train-base", "train the built-in softmax classifier");
  c_train->add_option("--features", tb.features, "features CSV")->required();
  c_train->add_option("--manifest", tb.manifest, "manifest of training scans (labels)")->required();
  c_train->add_option("--out", tb.out, "model JSON")->required();
  tb_flags.add_to(c_train);

  // predict
  PredictOptions pr;
  auto* c_predict = app.add_subcommand("predict", "write softmax predictions for a features CSV");
  c_predict->add_option("--model", pr.model, "model JSON")->required();
  c_predict->add_option("--features", pr.features, "features CSV")->required();
  c_predict->add_option("--manifest", pr.manifest, "only predict scans in this manifest");
  c_predict->add_option("--model-id", pr.model_id, "model id (default: model file stem)");
  c_predict->add_option("--out", pr.out, "prediction CSV")->required();

  // ingest
  std::string ingest_in, ingest_out;
  auto* c_ingest = app.add_subcommand("ingest", "validate and normalise an external prediction CSV");
  c_ingest->add_option("--input", ingest_in, "external CSV (id,p_AD,p_MCI,p_CN)")->required();
  c_ingest->add_option("--out", ingest_out, "normalised prediction CSV")->required();

  // select-top
  SelectOptions sel;
  std::string sel_gran = "slice";
  auto* c_select = app.add_subcommand("select-top", "rank models by macro recall and keep the best k");
  c_select->add_option("--predictions", sel.predictions, "prediction CSVs ([id=]path)")->required();
  c_select->add_option("--manifest", sel.manifest, "manifest with true labels")->required();
  c_select->add_option("--k", sel.k, "models to keep")->capture_default_str();
  c_select->add_option("--granularity", sel_gran, "slice | scan")->capture_default_str();
  c_select->add_option("--out", sel.out, "selection JSON");

  // stack
  StackOptions st;
  TrainFlags st_flags;
  auto* c_stack = app.add_subcommand("stack", "train a softmax stacker on base predictions and apply it");
  c_stack->add_option("--train", st.train_predictions, "base prediction CSVs on training data ([id=]path)")
      ->required();
  c_stack->add_option("--labels", st.labels, "manifest with training labels")->required();
  c_stack->add_option("--predict", st.predict, "base prediction CSVs to combine ([id=]path)");
  c_stack->add_option("--out", st.out, "stacked prediction CSV");
  c_stack->add_option("--model-out", st.model_out, "stacking model JSON");
  st_flags.add_to(c_stack);

  // vote
  VoteOptions vo;
  auto* c_vote = app.add_subcommand("vote", "2-of-3 majority vote with CN fallback");
  c_vote->add_option("--predictions", vo.predictions, "exactly three prediction CSVs ([id=]path)")
      ->required()
      ->expected(3);
  c_vote->add_option("--out", vo.out, "vote CSV")->required();
  c_vote->add_option("--scores-out", vo.scores_out, "mean-softmax scores CSV for ROC");

  // eval
  EvalOptions ev;
  std::string ev_gran = "slice";
  auto* c_eval = app.add_subcommand("eval", "confusion matrix and precision/recall/specificity/F1/accuracy");
  c_eval->add_option("--predictions", ev.predictions, "prediction CSV");
  c_eval->add_option("--votes", ev.votes, "vote CSV");
  c_eval->add_option("--manifest", ev.manifest, "manifest with true labels")->required();
  c_eval->add_option("--granularity", ev_gran, "slice | scan")->capture_default_str();
  c_eval->add_option("--out-json", ev.out_json, "metrics JSON");
  c_eval->add_option("--out-confusion", ev.out_confusion, "confusion matrix CSV");

  // roc
  RocOptions ro;
  std::string ro_gran = "slice";
  auto* c_roc = app.add_subcommand("roc", "one-vs-all ROC curves and AUC");
  c_roc->add_option("--predictions", ro.predictions, "prediction CSV")->required();
  c_roc->add_option("--manifest", ro.manifest, "manifest with true labels")->required();
  c_roc->add_option("--granularity", ro_gran, "slice | scan")->capture_default_str();
  c_roc->add_option("--out", ro.out, "ROC CSV")->required();

  // pipeline
  std::vector<std::string> overrides;
  std::optional<std::string> p_work, p_manifest, p_strategy, p_ensemble, p_gran;
  auto* c_pipe = app.add_subcommand("pipeline", "synth/ingest -> sample -> preprocess -> train -> ensembles -> eval");
  c_pipe->add_option("--set", overrides, "override a config entry, e.g. --set sampling.strategy=all");
  c_pipe->add_option("--work-dir", p_work, "output directory (env " + std::string(kWorkDirEnv) + ")");
  c_pipe->add_option("--manifest", p_manifest, "scan manifest (default: generate synthetic data)");
  c_pipe->add_option("--strategy", p_strategy, "max1 | top<k> | all");
  c_pipe->add_option("--ensemble", p_ensemble, "vote | stack | both");
  c_pipe->add_option("--granularity", p_gran, "slice | scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: cli.UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*c_synth) {
      synth.counts = {synth_counts[0], synth_counts[1], synth_counts[2]};
      synth.extents = {synth_extents[0], synth_extents[1], synth_extents[2]};
      synth.datatype = datatype_from_name(synth_dtype);
      synth.seed = seed;
      run_synth(synth);
    } else if (*c_inspect) {
      run_inspect(inspect_input);
    } else if (*c_sample) {
      const auto trim_head = sample.spec.trim_head, trim_tail = sample.spec.trim_tail;
      const auto bins = sample.spec.bin_count;
      sample.spec = parse_strategy(sample_strategy, sample_k);
      sample.spec.trim_head = trim_head;
      sample.spec.trim_tail = trim_tail;
      sample.spec.bin_count = bins;
      sample.axis = axis_from_name(sample_axis);
      for (const auto& p : sample_inputs) sample.inputs.emplace_back(p);
      run_sample(sample);
    } else if (*c_prep) {
      prep.config.normalization = normalization_from_name(prep_norm);
      prep.axis = axis_from_name(prep_axis);
      run_preprocess(prep);
    } else if (*c_split) {
      split.config.seed = seed;
      run_split(split);
    } else if (*c_train) {
      tb.config = tb_flags.config(seed);
      run_train_base(tb);
    } else if (*c_predict) {
      run_predict(pr);
    } else if (*c_ingest) {
      run_ingest(ingest_in, ingest_out);
    } else if (*c_select) {
      sel.granularity = parse_granularity(sel_gran);
      run_select_top(sel);
    } else if (*c_stack) {
      st.config = st_flags.config(seed);
      if (!st.predict.empty() && st.out.empty()) {
        throw Error("cli", "UsageError", "--predict needs --out");
      }
      run_stack(st);
    } else if (*c_vote) {
      run_vote(vo);
    } else if (*c_eval) {
      ev.granularity = parse_granularity(ev_gran);
      run_eval(ev);
    } else if (*c_roc) {
      ro.granularity = parse_granularity(ro_gran);
      run_roc(ro);
    } else if (*c_pipe) {
      ConfigMap entries;
      if (!config_path.empty()) entries = read_config_file(config_path);
      if (const char* env = std::getenv(kWorkDirEnv); env && *env) entries["paths.work_dir"] = env;
      if (app.get_option("--seed")->count() > 0) entries["seed"] = std::to_string(seed);
      for (const auto& s : overrides) entries.insert_or_assign(parse_assignment(s).first, parse_assignment(s).second);
      if (p_work) entries["paths.work_dir"] = *p_work;
      if (p_manifest) entries["paths.manifest"] = *p_manifest;
      if (p_strategy) entries["sampling.strategy"] = *p_strategy;
      if (p_ensemble) entries["ensemble.method"] = *p_ensemble;
      if (p_gran) entries["evaluation.granularity"] = *p_gran;
      run_pipeline(build_config(entries));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.module() == "cli" && e.code() == "UsageError" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
