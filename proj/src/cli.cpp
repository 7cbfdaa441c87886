/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "sfda/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfda/config.hpp"
#include "sfda/error.hpp"
#include "sfda/evaluation.hpp"

namespace sfda {
namespace {

using json = nlohmann::json;

struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool deterministic = false;
  bool resume = false;
  std::string run_dir;
  // Stops after this many completed epochs, as if the process died.
  std::optional<int> stop_after;
};

struct Flags {
  TrainFlags train;
  std::string spec, out_dir;
  std::optional<std::uint64_t> synth_seed;
  std::string init, source, source_manifest;
  std::string checkpoint, manifest, split;
  std::optional<int> k;
};

class Logger {
 public:
  Logger(std::ostream& err, std::string command)
      : err_(err), command_(std::move(command)) {}

  void info(const std::string& msg) { line("info", msg); }
  void warn(const std::string& msg) { line("warn", msg); }
  void error(const std::string& msg) { line("error", msg); }

 private:
  void line(const char* level, const std::string& msg) {
    err_ << "level=" << level << " cmd=" << command_ << " msg=" << json(msg).dump()
         << "\n";
    err_.flush();
  }
  std::ostream& err_;
  std::string command_;
};

fs::path resolve_run_dir(const TrainFlags& f, const ExperimentConfig& cfg,
                         const std::string& command) {
  if (!f.run_dir.empty()) return f.run_dir;
  if (!cfg.paths.run_dir.empty()) return cfg.paths.run_dir;
  if (const char* root = std::getenv(kRunRootEnv); root && *root)
    return fs::path(root) / command;
  return fs::path("runs") / command;
}

// Run directory bookkeeping: config snapshot, per-epoch metrics, and
// per-epoch checkpoints.
class RunDir {
 public:
  explicit RunDir(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "checkpoints");
  }

  const fs::path& root() const { return root_; }
  fs::path model_path() const { return root_ / "model.ckpt"; }

  void snapshot(const ExperimentConfig& cfg) {
    write_file_atomic(root_ / "config.snapshot", experiment_config_json(cfg));
  }

  // Latest epoch checkpoint, if any.
  std::optional<std::pair<int, fs::path>> latest() const {
    std::optional<std::pair<int, fs::path>> best;
    for (const auto& e : fs::directory_iterator(root_ / "checkpoints")) {
      const std::string name = e.path().filename().string();
      if (name.rfind("epoch_", 0) != 0) continue;
      char* end = nullptr;
      const long k = std::strtol(name.c_str() + 6, &end, 10);
      if (*end != '\0' || k < 0) continue;
      if (!best || k > best->first) best = {{static_cast<int>(k), e.path()}};
    }
    return best;
  }

  // Keeps metric lines of epochs before `epoch` (used when resuming).
  void load_metrics(int epoch) {
    lines_.clear();
    const fs::path p = root_ / "metrics.log";
    if (!fs::exists(p)) return;
    std::istringstream in(read_file(p));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("epoch", -1) < epoch) lines_.push_back(line);
    }
  }

  void record(const EpochRecord& r) {
    json j = {{"epoch", r.epoch}, {"loss", r.loss}, {"lr", r.lr}};
    if (r.val_auc) j["val_auc"] = *r.val_auc;
    lines_.push_back(j.dump());
    std::string text;
    for (const auto& l : lines_) text += l + "\n";
    write_file_atomic(root_ / "metrics.log", text);
  }

  void checkpoint(int epoch, const Archive& archive) {
    save_archive(root_ / "checkpoints" / ("epoch_" + std::to_string(epoch)),
                 archive);
  }

 private:
  fs::path root_;
  std::vector<std::string> lines_;
};

std::vector<RoiTimeseries> load_split(const fs::path& manifest_path,
                                      std::initializer_list<Split> splits) {
  if (manifest_path.empty()) throw ConfigError("no manifest configured");
  const DatasetManifest m = read_manifest(manifest_path);
  return load_cohort(splits.size() ? m.with_splits(splits) : m);
}

void apply_train_flags(const TrainFlags& f, ExperimentConfig& cfg, Stage stage) {
  TrainConfig& t = cfg.train(stage);
  if (f.seed) t.seed = *f.seed;
  if (f.epochs) t.epochs = *f.epochs;
  if (f.deterministic) cfg.deterministic = true;
  t.validate();
}

template <class State>
RunHooks<State> make_hooks(RunDir& run, Logger& log, const TrainFlags& f) {
  RunHooks<State> hooks;
  hooks.on_epoch = [&run, &log](const EpochRecord& r) {
    run.record(r);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch=%d loss=%.6g lr=%.3g", r.epoch,
                  r.loss, r.lr);
    std::string msg = buf;
    if (r.val_auc) msg += " val_auc=" + std::to_string(*r.val_auc);
    log.info(msg);
  };
  hooks.on_state = [&run](const State& s) { run.checkpoint(s.epoch, to_archive(s)); };
  if (f.stop_after) {
    const int limit = *f.stop_after;
    hooks.stop = [limit](const State& s) { return s.epoch >= limit; };
  }
  hooks.warn = [&log](const std::string& w) { log.warn(w); };
  return hooks;
}

template <class State, class Load>
std::optional<State> resume_state(RunDir& run, Logger& log, bool resume,
                                  Load load) {
  if (!resume) {
    run.load_metrics(0);
    return std::nullopt;
  }
  const auto latest = run.latest();
  if (!latest) {
    log.warn("nothing to resume in " + run.root().string() + "; starting fresh");
    run.load_metrics(0);
    return std::nullopt;
  }
  log.info("resuming from " + latest->second.string());
  run.load_metrics(latest->first);
  return load(load_archive(latest->second));
}

void finish(RunDir& run, Logger& log, std::ostream& out, const Archive& a,
            bool stopped) {
  if (stopped) {
    log.info("stopped early; resume with --resume");
    return;
  }
  save_archive(run.model_path(), a);
  out << run.model_path().string() << "\n";
}

int cmd_gen_synth(const Flags& f, std::ostream& out, Logger& log) {
  SyntheticSpec spec = load_synthetic_spec(f.spec);
  if (f.synth_seed) spec.seed = *f.synth_seed;
  const SyntheticPaths paths = generate_synthetic_cohort(spec, f.out_dir);
  log.info("wrote synthetic cohort to " + f.out_dir);
  out << paths.source_manifest.string() << "\n"
      << paths.target_manifest.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Flags& f, std::ostream& out, Logger& log) {
  ExperimentConfig cfg = load_experiment_config(f.train.config);
  apply_train_flags(f.train, cfg, Stage::kPretrain);
  RunDir run(resolve_run_dir(f.train, cfg, "pretrain"));
  run.snapshot(cfg);
  UnlabeledCohort aux(load_split(cfg.paths.auxiliary_manifest, {}));
  auto resume = resume_state<MfeState>(run, log, f.train.resume, mfe_state_from);
  const MfeState s = pretrain_unsupervised(aux, cfg.pretrain, cfg.model,
                                           make_hooks<MfeState>(run, log, f.train),
                                           std::move(resume));
  finish(run, log, out, to_archive(s), s.epoch < cfg.pretrain.epochs);
  return kExitOk;
}

int cmd_train_source(const Flags& f, std::ostream& out, Logger& log) {
  ExperimentConfig cfg = load_experiment_config(f.train.config);
  apply_train_flags(f.train, cfg, Stage::kSource);
  RunDir run(resolve_run_dir(f.train, cfg, "train-source"));
  run.snapshot(cfg);
  const auto train =
      load_split(cfg.paths.source_manifest, {Split::kSourceTrain});
  const auto val = load_split(cfg.paths.source_manifest, {Split::kSourceVal});
  std::optional<EncoderParams> init;
  if (!f.init.empty()) {
    const Archive a = load_archive(f.init);
    init = a.meta("kind") == "mfe" ? init_source_from_pretrain(mfe_state_from(a))
                                   : source_state_from(a).params;
    log.info("initialized from " + f.init);
  }
  auto resume =
      resume_state<SourceState>(run, log, f.train.resume, source_state_from);
  const SourceState s = train_source(
      train, init, cfg.source, cfg.model, make_hooks<SourceState>(run, log, f.train),
      std::move(resume), val.empty() ? nullptr : &val);
  finish(run, log, out, to_archive(s), s.epoch < cfg.source.epochs);
  return kExitOk;
}

int cmd_adapt(const Flags& f, std::ostream& out, Logger& log) {
  if (!f.source_manifest.empty())
    throw ContractError("source data forbidden in adaptation");
  ExperimentConfig cfg = load_experiment_config(f.train.config);
  apply_train_flags(f.train, cfg, Stage::kAdapt);
  RunDir run(resolve_run_dir(f.train, cfg, "adapt"));
  run.snapshot(cfg);
  const EncoderParams source = load_encoder(f.source);
  auto audit = std::make_shared<AccessLog>();
  UnlabeledCohort target(load_split(cfg.paths.target_manifest, {}), audit);
  auto resume = resume_state<MfeState>(run, log, f.train.resume, mfe_state_from);
  const MfeState s = adapt_target(target, source, cfg.adapt, cfg.model,
                                  make_hooks<MfeState>(run, log, f.train),
                                  std::move(resume));
  log.info("target label reads: " + std::to_string(audit->events().size()));
  finish(run, log, out, to_archive(s), s.epoch < cfg.adapt.epochs);
  return kExitOk;
}

struct EvalInputs {
  ExperimentConfig cfg;
  MfeState model;
  std::vector<RoiTimeseries> cohort;
  fs::path out_dir;
};

EvalInputs eval_inputs(const Flags& f, const std::string& command) {
  EvalInputs in;
  in.cfg = load_experiment_config(f.train.config);
  in.model = load_model(f.checkpoint);
  const fs::path manifest =
      f.manifest.empty() ? in.cfg.paths.eval_manifest : fs::path(f.manifest);
  DatasetManifest m = read_manifest(manifest);
  if (!f.split.empty()) m = m.with_splits({parse_split(f.split)});
  for (const auto& e : m.entries)
    if (!e.label)
      throw ConfigError("subject " + e.subject_id +
                        ": evaluation needs a labeled manifest");
  const int n = in.model.branches.front().shape.roi_count;
  if (m.roi_count != n)
    throw SchemaError("checkpoint expected N=" + std::to_string(n) +
                      ", found N=" + std::to_string(m.roi_count));
  in.cohort = load_cohort(m);
  if (in.cohort.empty()) throw ConfigError("evaluation cohort is empty");
  in.out_dir = resolve_run_dir(f.train, in.cfg, command);
  fs::create_directories(in.out_dir);
  return in;
}

int cmd_evaluate(const Flags& f, std::ostream& out, Logger& log) {
  EvalInputs in = eval_inputs(f, "evaluate");
  const InferenceOptions opts{in.cfg.eval.stochastic_views, in.cfg.eval.seed};
  const auto preds = ensemble_predict_many(in.cohort, in.model, in.cfg.model, opts);
  std::vector<Prediction> rows;
  std::string table = "subject_id\tlabel\tprobability\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rows.push_back({in.cohort[i].subject_id, preds[i].probability,
                    in.cohort[i].label});
    char buf[64];
    std::snprintf(buf, sizeof(buf), "\t%d\t%.17g\n", *in.cohort[i].label,
                  preds[i].probability);
    table += in.cohort[i].subject_id + buf;
  }
  const MetricsRecord record = evaluate_cohort(rows, in.cfg.eval.threshold);
  write_file_atomic(in.out_dir / "predictions.tsv", table);
  const ReportPaths paths = emit_report(record, nullptr, in.out_dir);
  log.info("wrote " + paths.record.string());
  log.info("\n" + format_table(record));
  out << format_record(record);
  return kExitOk;
}

int cmd_explain(const Flags& f, std::ostream& out, Logger& log) {
  EvalInputs in = eval_inputs(f, "explain");
  const int k = f.k ? *f.k : in.cfg.eval.top_k;
  if (k < 1) throw ConfigError("--k must be >= 1");
  const auto ranking =
      roi_importance(in.model, in.cohort, k, in.cfg.model, in.cfg.eval.threshold);
  const InferenceOptions opts{0, 0};
  std::vector<Prediction> rows;
  const auto preds = ensemble_predict_many(in.cohort, in.model, in.cfg.model, opts);
  for (std::size_t i = 0; i < preds.size(); ++i)
    rows.push_back({in.cohort[i].subject_id, preds[i].probability,
                    in.cohort[i].label});
  const ReportPaths paths = emit_report(
      evaluate_cohort(rows, in.cfg.eval.threshold), &ranking, in.out_dir);
  log.info("wrote " + paths.ranking.string());
  out << format_ranking(ranking);
  return kExitOk;
}

void add_train_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--config", t.config, "Experiment config (JSON)")->required();
  app->add_option("--seed", t.seed, "Override the stage seed");
  app->add_option("--epochs", t.epochs, "Override the stage epoch budget");
  app->add_flag("--deterministic", t.deterministic,
                "Fixed reduction order (single-threaded)");
  app->add_flag("--resume", t.resume, "Continue from the latest checkpoint");
  app->add_option("--run-dir", t.run_dir, "Run directory");
  app->add_option("--stop-after", t.stop_after,
                  "Stop after this many completed epochs");
}

void add_eval_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.train.config, "Experiment config (JSON)")
      ->required();
  app->add_option("--checkpoint", f.checkpoint, "Model checkpoint")->required();
  app->add_option("--manifest", f.manifest, "Labeled manifest (overrides config)");
  app->add_option("--split", f.split, "Only use entries of this split");
  app->add_option("--out", f.train.run_dir, "Report directory");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Source-free domain adaptation for brain functional networks",
               "sfda"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic cohort");
  gen->add_option("--spec", f.spec, "Synthetic spec (JSON)")->required();
  gen->add_option("--out", f.out_dir, "Output directory")->required();
  gen->add_option("--seed", f.synth_seed, "Override the spec seed");

  auto* pre = app.add_subcommand("pretrain", "Unsupervised multi-branch pretraining");
  add_train_flags(pre, f.train);

  auto* src = app.add_subcommand("train-source", "Supervised source training");
  add_train_flags(src, f.train);
  src->add_option("--init", f.init, "Pretrained checkpoint to start from");

  auto* adapt = app.add_subcommand("adapt", "Source-free target adaptation");
  add_train_flags(adapt, f.train);
  adapt->add_option("--source", f.source, "Source model checkpoint")->required();
  adapt->add_option("--source-manifest", f.source_manifest,
                    "Rejected: adaptation never reads source data");

  auto* eval = app.add_subcommand("evaluate", "Metrics on a labeled manifest");
  add_eval_flags(eval, f);

  auto* explain = app.add_subcommand("explain", "Top-k ROI importance ranking");
  add_eval_flags(explain, f);
  explain->add_option("--k", f.k, "Ranking length");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Logger log(err, command);
  try {
    if (command == "gen-synth") return cmd_gen_synth(f, out, log);
    if (command == "pretrain") return cmd_pretrain(f, out, log);
    if (command == "train-source") return cmd_train_source(f, out, log);
    if (command == "adapt") return cmd_adapt(f, out, log);
    if (command == "evaluate") return cmd_evaluate(f, out, log);
    if (command == "explain") return cmd_explain(f, out, log);
  } catch (const ConfigError& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const ContractError& e) {
    log.error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log.error(e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sfda
