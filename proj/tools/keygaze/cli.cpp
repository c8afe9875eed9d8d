// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "keygaze/dataset.hpp"
#include "keygaze/error.hpp"
#include "keygaze/evaluation.hpp"
#include "keygaze/io.hpp"
#include "keygaze/model_io.hpp"
#include "keygaze/synthetic.hpp"
#include "keygaze/training.hpp"

namespace keygaze::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = KEYGAZE_VERSION;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool quiet = false;
};

/// Record of one command invocation, written next to its primary output.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv)
      : start_(std::chrono::steady_clock::now()) {
    doc_["tool"] = "keygaze";
    doc_["version"] = kVersion;
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["config"] = nullptr;
    doc_["seed"] = nullptr;
    doc_["inputs"] = ordered_json::array();
    doc_["outputs"] = ordered_json::array();
  }

  void set_config(ordered_json config) { doc_["config"] = std::move(config); }
  void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }
  void set(const std::string& key, ordered_json value) { doc_[key] = std::move(value); }
  void set_path(fs::path p) { path_ = std::move(p); }
  const std::optional<fs::path>& path() const { return path_; }

  void add_input(const fs::path& p) { doc_["inputs"].push_back({{"path", p.string()}, {"digest", file_digest(p)}}); }
  void add_output(const fs::path& p) {
    doc_["outputs"].push_back({{"path", p.string()}, {"digest", file_digest(p)}});
  }

  void write(const std::string& status, const std::optional<Error>& error = std::nullopt) {
    if (!path_) return;
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["duration_s"] = elapsed;
    doc_["status"] = status;
    if (error) doc_["error"] = {{"code", to_string(error->code())}, {"message", error->what()}};
    write_file_atomic(*path_, doc_.dump(2) + "\n");
  }

 private:
  ordered_json doc_;
  std::optional<fs::path> path_;
  std::chrono::steady_clock::time_point start_;
};

fs::path artifact_dir() {
  if (const char* env = std::getenv("KEYGAZE_ARTIFACT_DIR"); env && *env) return env;
  return ".";
}

fs::path output_path(const Globals& g, const char* default_name) {
  if (!g.out.empty()) return g.out;
  return artifact_dir() / default_name;
}

fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

void ensure_parent(const fs::path& p) {
  const fs::path parent = p.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create directory '" + parent.string() + "': " + ec.message());
}

ordered_json read_json(const fs::path& p, ErrorCode on_parse_error) {
  const std::string text = read_file(p);
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(on_parse_error, p.string() + ": " + e.what());
  }
}

void say(const Globals& g, const std::string& line) {
  if (!g.quiet) std::cout << line << '\n';
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<LabeledSample> admitted_samples(const std::vector<Record>& records, const Globals& g,
                                            const std::string& what) {
  AdmittedSet set = admit(records);
  if (!set.skipped.empty()) {
    say(g, what + ": skipped " + std::to_string(set.skipped.size()) + " labeled records");
  }
  return std::move(set.samples);
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::optional<std::size_t> n;
};

void cmd_synth(const Globals& g, const SynthArgs& a, RunManifest& m) {
  SynthParams p = g.config.empty() ? SynthParams{} : synth_params_from_json(read_json(g.config, ErrorCode::InvalidConfig));
  if (!g.config.empty()) m.add_input(g.config);
  if (g.seed) p.seed = *g.seed;
  if (a.n) p.n_samples = *a.n;
  p.validate();

  const fs::path out = output_path(g, "synth.jsonl");
  ensure_parent(out);
  m.set_path(sibling(out, ".manifest.json"));
  m.set_config(to_json(p));
  m.set_seed(p.seed);

  const SynthResult res = generate_dataset(p);
  write_dataset(out, res.records);
  m.add_output(out);
  m.set("synth", synth_manifest(p, res.stats));

  std::string hist;
  for (std::size_t k = 2; k <= kNumSlots; ++k) {
    hist += " k" + std::to_string(k) + "=" + std::to_string(res.stats.keypoint_histogram[k]);
  }
  say(g, "wrote " + std::to_string(res.records.size()) + " records to " + out.string() + " (" + hist.substr(1) + ")");
}

// --- split -------------------------------------------------------------------

struct SplitArgs {
  std::string data;
  std::vector<double> proportions{0.5, 0.2, 0.3};
};

void cmd_split(const Globals& g, const SplitArgs& a, RunManifest& m) {
  const fs::path dir = output_path(g, "split");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
  m.set_path(dir / "manifest.json");

  const std::uint64_t seed = g.seed.value_or(0);
  const SplitProportions props{a.proportions[0], a.proportions[1], a.proportions[2]};
  m.set_seed(seed);
  m.set_config({{"train", props.train}, {"val", props.val}, {"test", props.test}});
  m.add_input(a.data);

  const auto records = read_dataset(a.data);
  const DatasetSplit split = split_dataset(records, props, seed);
  const std::pair<const char*, const std::vector<Record>*> parts[] = {
      {"train.jsonl", &split.train}, {"val.jsonl", &split.val}, {"test.jsonl", &split.test}};
  for (const auto& [name, recs] : parts) {
    write_dataset(dir / name, *recs);
    m.add_output(dir / name);
  }
  say(g, "split " + std::to_string(records.size()) + " records: train " + std::to_string(split.train.size()) +
             ", val " + std::to_string(split.val.size()) + ", test " + std::to_string(split.test.size()));
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string train;
  std::string val;
  std::string finetune;
  std::optional<std::string> variant;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> batch;
  std::optional<double> l2;
  std::optional<std::string> augment;
  bool freeze_stats = false;
};

void cmd_train(const Globals& g, const TrainArgs& a, RunManifest& m) {
  TrainConfig c = g.config.empty() ? TrainConfig{} : train_config_from_json(read_json(g.config, ErrorCode::InvalidConfig));
  if (!g.config.empty()) m.add_input(g.config);
  if (g.seed) c.seed = *g.seed;
  if (a.variant) c.input_variant = parse_input_variant(*a.variant);
  if (a.lr) c.learning_rate = *a.lr;
  if (a.epochs) c.max_epochs = *a.epochs;
  if (a.patience) c.patience = *a.patience;
  if (a.batch) c.batch_size = *a.batch;
  if (a.l2) c.l2_hidden = *a.l2;
  if (a.augment) c.augmentation = parse_augmentation(*a.augment);
  if (a.freeze_stats) c.freeze_conf_stats = true;
  c.validate();

  const fs::path out = output_path(g, "model.json");
  ensure_parent(out);
  m.set_path(sibling(out, ".manifest.json"));
  m.set_config(to_json(c));
  m.set_seed(c.seed);

  m.add_input(a.train);
  m.add_input(a.val);
  const auto train_records = read_dataset(a.train);
  const auto val_records = read_dataset(a.val);
  const auto train_set = admitted_samples(train_records, g, "train");
  const auto val_set = admitted_samples(val_records, g, "val");

  TrainResult res;
  if (!a.finetune.empty()) {
    m.add_input(a.finetune);
    const ModelWeights base = load_model(a.finetune);
    res = fine_tune(base, c, train_set, val_set);
  } else {
    res = train(c, train_set, val_set);
  }

  save_model(res.weights, out);
  const fs::path report = sibling(out, ".report.json");
  write_file_atomic(report, to_json(res.report).dump(2) + "\n");
  const fs::path frozen = sibling(out, ".config.json");
  write_file_atomic(frozen, to_json(c).dump(2) + "\n");
  m.add_output(out);
  m.add_output(report);
  m.add_output(frozen);

  const auto& r = res.report;
  say(g, std::string(a.finetune.empty() ? "trained " : "fine-tuned ") + res.weights.arch.tag() + ": best epoch " +
             std::to_string(r.best_epoch) + " of " + std::to_string(r.history.empty() ? 0 : r.history.size() - 1) +
             ", val error " + fixed(r.final_val_error_deg, 2) + " deg (" + std::string(to_string(r.stop)) + ")");
}

// --- predict / baseline -----------------------------------------------------

struct PredictArgs {
  std::string model;
  std::string data;
  std::string baseline;
};

void write_predictions(const fs::path& out, const std::vector<PredictionRecord>& preds) {
  std::string text;
  for (const auto& p : preds) text += prediction_to_json(p) + '\n';
  write_file_atomic(out, text);
}

void cmd_predict(const Globals& g, const PredictArgs& a, RunManifest& m) {
  if (a.model.empty() == a.baseline.empty()) {
    throw Error(ErrorCode::InvalidConfig, "give exactly one of --model or --baseline");
  }
  if (!a.baseline.empty() && a.baseline != "geom") {
    throw Error(ErrorCode::InvalidConfig, "unknown baseline '" + a.baseline + "' (expected geom)");
  }
  const fs::path out = output_path(g, "predictions.jsonl");
  ensure_parent(out);
  m.set_path(sibling(out, ".manifest.json"));
  m.set_config({{"model", a.model.empty() ? ordered_json() : ordered_json(a.model)},
                {"baseline", a.baseline.empty() ? ordered_json() : ordered_json(a.baseline)}});

  m.add_input(a.data);
  const auto records = read_dataset(a.data);
  std::vector<PredictionRecord> preds;
  if (!a.baseline.empty()) {
    preds = predict_records(geom_predictor(), records, "geom");
  } else {
    m.add_input(a.model);
    const ModelWeights w = load_model(a.model);
    preds = predict_records(network_predictor(w), records, w.arch.tag());
  }
  write_predictions(out, preds);
  m.add_output(out);

  std::size_t skipped = 0;
  for (const auto& p : preds) skipped += p.skip.has_value();
  say(g, "wrote " + std::to_string(preds.size()) + " predictions (" + std::to_string(skipped) + " skipped) to " +
             out.string());
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string data;
  std::size_t grid = 0;
};

void cmd_eval(const Globals& g, const EvalArgs& a, RunManifest& m) {
  const fs::path out = output_path(g, "report.json");
  ensure_parent(out);
  m.set_path(sibling(out, ".manifest.json"));
  m.set_config({{"grid", a.grid}});
  m.add_input(a.pred);
  m.add_input(a.data);

  const auto preds = read_predictions(a.pred);
  const auto records = read_dataset(a.data);
  JoinDiagnostics diag;
  const EvalReport r = evaluate_predictions(preds, records, &diag);

  ordered_json doc = report_to_json(r);
  doc["join"] = {{"missing_predictions", diag.missing_predictions},
                 {"unlabeled_predictions", diag.unlabeled_keys.size()},
                 {"unlabeled_keys", diag.unlabeled_keys}};
  write_file_atomic(out, doc.dump(1) + "\n");
  const fs::path samples = sibling(out, ".samples.csv");
  const fs::path curve = sibling(out, ".curve.csv");
  write_file_atomic(samples, samples_csv(r));
  write_file_atomic(curve, a.grid > 0 ? curve_csv(cumulative_on_grid(r, a.grid)) : curve_csv(r.cumulative));
  m.add_output(out);
  m.add_output(samples);
  m.add_output(curve);

  if (diag.missing_predictions > 0 || !diag.unlabeled_keys.empty()) {
    std::cerr << "join: " << diag.missing_predictions << " labeled records without a prediction, "
              << diag.unlabeled_keys.size() << " predictions without a labeled record\n";
  }
  std::string line = "mean error " + fixed(r.mean_error_deg, 2) + " deg over " + std::to_string(r.n_estimable) +
                     "/" + std::to_string(r.n_total) + " samples";
  if (r.pearson_rho) line += ", rho " + fixed(*r.pearson_rho, 3);
  say(g, line);
}

// --- compare -----------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> reports;
  std::vector<std::string> labels;
};

void cmd_compare(const Globals& g, const CompareArgs& a, RunManifest& m) {
  const fs::path out = output_path(g, "comparison.json");
  ensure_parent(out);
  m.set_path(sibling(out, ".manifest.json"));
  m.set_config({{"labels", a.labels}});

  std::vector<EvalReport> reports;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    m.add_input(a.reports[i]);
    reports.push_back(report_from_json(read_json(a.reports[i], ErrorCode::InvalidRecord)));
    labels.push_back(i < a.labels.size() ? a.labels[i] : fs::path(a.reports[i]).stem().string());
  }
  const ComparisonTable t = compare_models(reports, labels);
  const std::string text = comparison_text(t);
  write_file_atomic(out, comparison_json(t).dump(2) + "\n");
  const fs::path txt = sibling(out, ".txt");
  write_file_atomic(txt, text);
  m.add_output(out);
  m.add_output(txt);
  if (!g.quiet) std::cout << text;
}

int exit_code_for(ErrorCode code) {
  switch (classify(code)) {
    case ErrorClass::Validation: return kValidation;
    case ErrorClass::Io: return kIo;
    case ErrorClass::Runtime: return kRuntime;
  }
  return kRuntime;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Apparent gaze direction from five head keypoints", "keygaze"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw of the command");
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Primary output path (default: $KEYGAZE_ARTIFACT_DIR or .)");
  app.add_flag("--quiet", g.quiet, "Only report errors");

  std::function<void(RunManifest&)> action;
  std::string command;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  s->add_option("--n", synth.n, "Number of samples (overrides the config)")->check(CLI::PositiveNumber);
  s->callback([&] {
    command = "synth";
    action = [&](RunManifest& m) { cmd_synth(g, synth, m); };
  });

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "Group-wise train/val/test split");
  sp->add_option("--data", split.data, "Dataset to split")->required()->check(CLI::ExistingFile);
  sp->add_option("--proportions", split.proportions, "train val test fractions")->expected(3);
  sp->callback([&] {
    command = "split";
    action = [&](RunManifest& m) { cmd_split(g, split, m); };
  });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train (or fine-tune) a gaze model");
  t->add_option("--train", tr.train, "Training dataset")->required()->check(CLI::ExistingFile);
  t->add_option("--val", tr.val, "Validation dataset")->required()->check(CLI::ExistingFile);
  t->add_option("--finetune", tr.finetune, "Start from this model file")->check(CLI::ExistingFile);
  t->add_option("--variant", tr.variant, "Input layer: cgu, net0 or relu_conf");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--epochs", tr.epochs, "Maximum number of epochs");
  t->add_option("--patience", tr.patience, "Early-stopping patience in epochs");
  t->add_option("--batch-size", tr.batch, "Batch size");
  t->add_option("--l2", tr.l2, "L2 penalty on the hidden layers");
  t->add_option("--augment", tr.augment, "none or quadrant_balance");
  t->add_flag("--freeze-conf-stats", tr.freeze_stats, "Keep the base model's confidence statistics");
  t->callback([&] {
    command = "train";
    action = [&](RunManifest& m) { cmd_train(g, tr, m); };
  });

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict gaze for every person in a dataset");
  p->add_option("--model", pr.model, "Model file")->check(CLI::ExistingFile);
  p->add_option("--baseline", pr.baseline, "Use a non-learned baseline instead (geom)");
  p->add_option("--data", pr.data, "Dataset")->required()->check(CLI::ExistingFile);
  p->callback([&] {
    command = "predict";
    action = [&](RunManifest& m) { cmd_predict(g, pr, m); };
  });

  PredictArgs bl;
  bl.baseline = "geom";
  auto* b = app.add_subcommand("baseline", "Geometric baseline predictions");
  b->add_option("--data", bl.data, "Dataset")->required()->check(CLI::ExistingFile);
  b->add_option("--name", bl.baseline, "Baseline name")->check(CLI::IsMember({"geom"}));
  b->callback([&] {
    command = "baseline";
    action = [&](RunManifest& m) { cmd_predict(g, bl, m); };
  });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against dataset labels");
  e->add_option("--pred", ev.pred, "Prediction file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Labeled dataset")->required()->check(CLI::ExistingFile);
  e->add_option("--grid", ev.grid, "Resample the cumulative curve on this many points");
  e->callback([&] {
    command = "eval";
    action = [&](RunManifest& m) { cmd_eval(g, ev, m); };
  });

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Tabulate several evaluation reports");
  c->add_option("reports", cmp.reports, "Report files")->required()->check(CLI::ExistingFile);
  c->add_option("--labels", cmp.labels, "Row labels, in report order")->delimiter(',');
  c->callback([&] {
    command = "compare";
    action = [&](RunManifest& m) { cmd_compare(g, cmp, m); };
  });

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kValidation;
  }

  RunManifest manifest(command, std::vector<std::string>(argv, argv + argc));
  try {
    action(manifest);
    manifest.write("ok");
    return kOk;
  } catch (const Error& ex) {
    std::cerr << "keygaze " << command << ": " << ex.what() << '\n';
    try {
      manifest.write("failed", ex);
    } catch (const Error&) {
    }
    return exit_code_for(ex.code());
  } catch (const std::exception& ex) {
    std::cerr << "keygaze " << command << ": " << ex.what() << '\n';
    return kRuntime;
  }
}

}  // namespace keygaze::cli
