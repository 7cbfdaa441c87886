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
#include "sfda/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "sfda/error.hpp"
#include "sfda/evaluation.hpp"

namespace sfda {
namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_text(const std::string& text) {
  std::istringstream in(text);
  std::mt19937_64 rng;
  in >> rng;
  if (in.fail()) throw SchemaError("archive has a malformed rng state");
  return rng;
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

int infer_roi_count(const std::vector<RoiTimeseries>& series) {
  const auto n = series.front().roi_count();
  for (const auto& s : series)
    if (s.roi_count() != n)
      throw SchemaError("subject " + s.subject_id + ": expected N=" +
                        std::to_string(n) + ", found N=" +
                        std::to_string(s.roi_count()));
  return static_cast<int>(n);
}

// Rejects cohorts in which some sampled enrichment could leave a subject
// with fewer samples than one window.
void check_lengths(const std::vector<RoiTimeseries>& series,
                   const std::vector<EnrichmentKind>& kinds,
                   const ModelContext& ctx) {
  const auto& d = ctx.domains;
  const Eigen::Index l = ctx.graph.window.length;
  for (const auto& s : series) {
    const Eigen::Index len = s.length();
    for (EnrichmentKind k : kinds) {
      Eigen::Index shortest = len;
      Eigen::Index needed = l;
      switch (k) {
        case EnrichmentKind::kNone:
          break;
        case EnrichmentKind::kWarp:
          for (double a : d.warp_ratios)
            shortest = std::min(shortest, warped_length(len, a));
          break;
        case EnrichmentKind::kReceptiveField:
          for (int b : d.window_sizes) needed = std::max<Eigen::Index>(needed, b);
          break;
        case EnrichmentKind::kSlice:
          for (double g : d.slice_ratios)
            shortest = std::min(shortest, sliced_length(len, g));
          break;
      }
      if (shortest < needed)
        throw ConfigError("subject " + s.subject_id + " (L=" +
                          std::to_string(len) + ") is too short for " +
                          enrichment_name(k) + " enrichment");
    }
  }
}

template <class State>
bool after_epoch(const RunHooks<State>& hooks, const EpochRecord& record,
                 const State& state) {
  if (hooks.on_epoch) hooks.on_epoch(record);
  if (hooks.on_state) hooks.on_state(state);
  return hooks.stop && hooks.stop(state);
}

void check_loss(double loss, int epoch, std::size_t step) {
  if (!std::isfinite(loss))
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                       ", step " + std::to_string(step));
}

// Shared loop of pretraining and adaptation: every branch sees its own
// randomly enriched view of each subject and the branches are fitted to
// agree with each other.
void consistency_training(const std::vector<RoiTimeseries>& series,
                          MfeState& state, const TrainConfig& cfg,
                          const ModelContext& ctx,
                          const RunHooks<MfeState>& hooks) {
  const std::size_t m = state.size();
  const ForwardOptions train{.mode = Mode::kTrain};
  for (; state.epoch < cfg.epochs;) {
    const int epoch = state.epoch;
    const double lr = lr_at(epoch, cfg);
    const auto order = shuffled(series.size(), state.rng);
    double loss_sum = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<GraphSequence>> graphs(m);
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t i = start; i < end; ++i) {
          const auto& s = series[order[i]];
          const auto params =
              sample_params(state.kinds[b], ctx.domains, s.length(), state.rng);
          graphs[b].push_back(build_graph_sequence(s, params, ctx.graph));
        }

      ad::Tape tape;
      std::vector<EncoderTensors<ad::Var>> vars;
      std::vector<ad::Var> features, logits;
      std::vector<NormBatchStats> stats;
      for (std::size_t b = 0; b < m; ++b) {
        vars.push_back(bind(tape, state.branches[b], true));
        std::vector<const GraphSequence*> ptrs;
        for (const auto& g : graphs[b]) ptrs.push_back(&g);
        auto trace = encode_batch(tape, state.branches[b], vars.back(), ptrs,
                                  train);
        features.push_back(trace.features);
        logits.push_back(trace.logits);
        stats.push_back(std::move(trace.stats));
      }
      const ad::Var loss = mutual_consistency(features, logits, cfg.pairs);
      const double value = loss.value()(0, 0);
      check_loss(value, epoch, step);
      tape.backward(loss);
      for (std::size_t b = 0; b < m; ++b) {
        state.optimizers[b].step(state.branches[b], gradients(tape, vars[b]),
                                 lr);
        if (!cfg.freeze_norm_stats)
          update_running_stats(state.branches[b], stats[b], cfg.norm_momentum);
      }
      loss_sum += value * static_cast<double>(end - start);
    }
    state.epoch = epoch + 1;
    const EpochRecord record{epoch,
                             loss_sum / static_cast<double>(series.size()), lr,
                             std::nullopt};
    if (after_epoch(hooks, record, state)) break;
  }
}

void check_mfe_resume(const MfeState& state, const TrainConfig& cfg,
                      int roi_count) {
  if (state.kinds != cfg.branch_kinds)
    throw ConfigError("resumed state has different branch kinds");
  if (state.branches.size() != state.optimizers.size())
    throw ContractError("resumed state has mismatched optimizers");
  for (const auto& b : state.branches)
    if (b.shape.roi_count != roi_count)
      throw SchemaError("checkpoint expected N=" +
                        std::to_string(b.shape.roi_count) + ", found N=" +
                        std::to_string(roi_count));
}

std::string join_kinds(const std::vector<EnrichmentKind>& kinds) {
  std::string out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ",";
    out += enrichment_name(kinds[i]);
  }
  return out;
}

std::vector<EnrichmentKind> split_kinds(const std::string& text) {
  std::vector<EnrichmentKind> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_enrichment(item));
  return out;
}

void put_shape(Archive& a, const EncoderShape& shape, const char* kind,
               int epoch, const std::mt19937_64& rng) {
  a.set("kind", kind);
  a.set("roi_count", std::to_string(shape.roi_count));
  a.set("feature_dim", std::to_string(shape.feature_dim));
  a.set("gin_layers", std::to_string(EncoderTensors<Matrix>::kGinLayers));
  a.set("epoch", std::to_string(epoch));
  a.set("rng", rng_text(rng));
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("train.lr0 must be > 0");
  if (!(lr_decay_factor > 0)) throw ConfigError("train.lr_decay_factor must be > 0");
  if (lr_decay_every < 1) throw ConfigError("train.lr_decay_every must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(norm_momentum >= 0 && norm_momentum <= 1))
    throw ConfigError("train.norm_momentum must lie in [0, 1]");
  std::set<EnrichmentKind> seen(branch_kinds.begin(), branch_kinds.end());
  if (seen.size() != branch_kinds.size())
    throw ConfigError("train.branch_kinds must be distinct");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractError("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

MfeState MfeState::single(const EncoderParams& params) {
  MfeState s;
  s.branches = {params};
  s.kinds = {EnrichmentKind::kNone};
  s.optimizers = {Adam(params)};
  return s;
}

MfeState pretrain_unsupervised(const UnlabeledCohort& auxiliary,
                               const TrainConfig& cfg, const ModelContext& ctx,
                               const RunHooks<MfeState>& hooks,
                               std::optional<MfeState> resume) {
  cfg.validate();
  if (auxiliary.empty()) throw ConfigError("auxiliary cohort is empty");
  if (cfg.branch_kinds.size() < 2)
    throw ConfigError("consistency training needs at least 2 branches");
  const auto& series = auxiliary.all();
  const int n = infer_roi_count(series);
  check_lengths(series, cfg.branch_kinds, ctx);

  MfeState state;
  if (resume) {
    check_mfe_resume(*resume, cfg, n);
    state = std::move(*resume);
  } else {
    state.rng.seed(cfg.seed);
    state.kinds = cfg.branch_kinds;
    const EncoderShape shape{n, ctx.feature_dim};
    for (std::size_t b = 0; b < cfg.branch_kinds.size(); ++b) {
      state.branches.push_back(EncoderParams::initialize(shape, state.rng));
      state.optimizers.emplace_back(state.branches.back(), cfg.adam);
    }
  }
  consistency_training(series, state, cfg, ctx, hooks);
  return state;
}

EncoderParams init_source_from_pretrain(const MfeState& state) {
  return average_parameters(state.branches);
}

SourceState train_source(const std::vector<RoiTimeseries>& source,
                         const std::optional<EncoderParams>& init,
                         const TrainConfig& cfg, const ModelContext& ctx,
                         const RunHooks<SourceState>& hooks,
                         std::optional<SourceState> resume,
                         const std::vector<RoiTimeseries>* validation) {
  cfg.validate();
  if (source.empty()) throw ConfigError("source cohort is empty");
  int positives = 0;
  for (const auto& s : source) {
    if (!s.label)
      throw ConfigError("subject " + s.subject_id +
                        ": label required for source training");
    positives += *s.label == 1;
  }
  const int n = infer_roi_count(source);
  if ((positives == 0 || positives == static_cast<int>(source.size())) &&
      hooks.warn)
    hooks.warn("degenerate cohort: every source label is " +
               std::to_string(*source.front().label));

  std::vector<GraphSequence> graphs;
  graphs.reserve(source.size());
  for (const auto& s : source)
    graphs.push_back(build_graph_sequence(s, EnrichmentParams::none(), ctx.graph));

  std::vector<GraphSequence> val_graphs;
  if (validation)
    for (const auto& s : *validation)
      val_graphs.push_back(
          build_graph_sequence(s, EnrichmentParams::none(), ctx.graph));

  SourceState state;
  if (resume) {
    if (resume->params.shape.roi_count != n)
      throw SchemaError("checkpoint expected N=" +
                        std::to_string(resume->params.shape.roi_count) +
                        ", found N=" + std::to_string(n));
    state = std::move(*resume);
  } else {
    state.rng.seed(cfg.seed);
    const EncoderShape shape{n, ctx.feature_dim};
    if (init) {
      if (!(init->shape == shape))
        throw SchemaError("initial parameters expected N=" +
                          std::to_string(init->shape.roi_count) +
                          ", found N=" + std::to_string(n));
      state.params = *init;
    } else {
      state.params = EncoderParams::initialize(shape, state.rng);
    }
    state.optimizer = Adam(state.params, cfg.adam);
  }

  const ForwardOptions train{.mode = Mode::kTrain};
  for (; state.epoch < cfg.epochs;) {
    const int epoch = state.epoch;
    const double lr = lr_at(epoch, cfg);
    const auto order = shuffled(source.size(), state.rng);
    double loss_sum = 0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const GraphSequence*> ptrs;
      Vector labels(static_cast<Eigen::Index>(end - start));
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&graphs[order[i]]);
        labels(static_cast<Eigen::Index>(i - start)) = *source[order[i]].label;
      }
      ad::Tape tape;
      const auto vars = bind(tape, state.params, true);
      auto trace = encode_batch(tape, state.params, vars, ptrs, train);
      const ad::Var loss = ad::bce_with_logits(trace.logits, labels);
      const double value = loss.value()(0, 0);
      check_loss(value, epoch, step);
      tape.backward(loss);
      state.optimizer.step(state.params, gradients(tape, vars), lr);
      update_running_stats(state.params, trace.stats, cfg.norm_momentum);
      loss_sum += value * static_cast<double>(end - start);
    }
    state.epoch = epoch + 1;
    EpochRecord record{epoch, loss_sum / static_cast<double>(source.size()), lr,
                       std::nullopt};
    if (validation && !validation->empty()) {
      std::vector<const GraphSequence*> ptrs;
      for (const auto& g : val_graphs) ptrs.push_back(&g);
      const auto out = encode_many(ptrs, state.params);
      std::vector<double> pos, neg;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& label = (*validation)[i].label;
        if (!label) continue;
        (*label == 1 ? pos : neg).push_back(out[i].logit);
      }
      if (!pos.empty() && !neg.empty()) record.val_auc = auc_rank(pos, neg);
    }
    if (after_epoch(hooks, record, state)) break;
  }
  return state;
}

MfeState adapt_target(const UnlabeledCohort& target,
                      const EncoderParams& source_params,
                      const TrainConfig& cfg, const ModelContext& ctx,
                      const RunHooks<MfeState>& hooks,
                      std::optional<MfeState> resume) {
  cfg.validate();
  if (target.empty()) throw ConfigError("target cohort is empty");
  if (cfg.branch_kinds.size() < 2)
    throw ConfigError("consistency training needs at least 2 branches");
  const auto& series = target.all();
  const int n = infer_roi_count(series);
  if (source_params.shape.roi_count != n)
    throw SchemaError("source model expected N=" +
                      std::to_string(source_params.shape.roi_count) +
                      ", found N=" + std::to_string(n));
  check_lengths(series, cfg.branch_kinds, ctx);

  MfeState state;
  if (resume) {
    check_mfe_resume(*resume, cfg, n);
    state = std::move(*resume);
  } else {
    state.rng.seed(cfg.seed);
    state.kinds = cfg.branch_kinds;
    for (std::size_t b = 0; b < cfg.branch_kinds.size(); ++b) {
      state.branches.push_back(source_params);
      state.optimizers.emplace_back(source_params, cfg.adam);
    }
  }
  consistency_training(series, state, cfg, ctx, hooks);
  return state;
}

std::vector<EnsemblePrediction> ensemble_predict_many(
    const std::vector<RoiTimeseries>& subjects, const MfeState& state,
    const ModelContext& ctx, const InferenceOptions& options) {
  if (state.branches.empty())
    throw ContractError("ensemble needs at least one branch");
  if (options.stochastic_views < 0)
    throw ConfigError("stochastic_views must be >= 0");
  // Every neutral view is the standard windowing, so it is built once.
  std::vector<GraphSequence> neutral;
  neutral.reserve(subjects.size());
  for (const auto& s : subjects)
    neutral.push_back(build_graph_sequence(s, EnrichmentParams::none(), ctx.graph));
  std::vector<const GraphSequence*> ptrs;
  for (const auto& g : neutral) ptrs.push_back(&g);

  const double m = static_cast<double>(state.size());
  std::vector<EnsemblePrediction> out(subjects.size());
  std::mt19937_64 rng(options.seed);
  for (std::size_t b = 0; b < state.size(); ++b) {
    auto outputs = encode_many(ptrs, state.branches[b]);
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      double p = predict_probability(outputs[i].logit);
      if (options.stochastic_views > 0) {
        p = 0;
        for (int v = 0; v < options.stochastic_views; ++v) {
          const auto params = sample_params(state.kinds[b], ctx.domains,
                                            subjects[i].length(), rng);
          const auto g = build_graph_sequence(subjects[i], params, ctx.graph);
          p += predict_probability(encode_subject(g, state.branches[b]).logit);
        }
        p /= options.stochastic_views;
      }
      if (b == 0) out[i].probability = 0;
      out[i].probability += p / m;
      out[i].branches.push_back(std::move(outputs[i]));
    }
  }
  return out;
}

double ensemble_predict(const RoiTimeseries& subject, const MfeState& state,
                        const ModelContext& ctx,
                        const InferenceOptions& options) {
  return ensemble_predict_many({subject}, state, ctx, options)
      .front()
      .probability;
}

double consistency_on_views(const std::vector<RoiTimeseries>& subjects,
                            const MfeState& state, const ModelContext& ctx,
                            const std::vector<EnrichmentParams>& views,
                            PairMode pairs) {
  if (views.size() != state.size())
    throw ContractError("consistency_on_views needs one view per branch");
  ConsistencyBatch batch;
  const Eigen::Index n = static_cast<Eigen::Index>(subjects.size());
  for (std::size_t b = 0; b < state.size(); ++b) {
    std::vector<GraphSequence> graphs;
    for (const auto& s : subjects)
      graphs.push_back(build_graph_sequence(s, views[b], ctx.graph));
    std::vector<const GraphSequence*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    const auto out = encode_many(ptrs, state.branches[b]);
    Matrix f(n, state.branches[b].shape.feature_dim);
    Vector l(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      f.row(i) = out[static_cast<std::size_t>(i)].features.transpose();
      l(i) = out[static_cast<std::size_t>(i)].logit;
    }
    batch.features.push_back(std::move(f));
    batch.logits.push_back(std::move(l));
  }
  return mutual_consistency(batch, pairs);
}

Archive to_archive(const SourceState& state) {
  Archive a;
  put_shape(a, state.params.shape, "encoder", state.epoch, state.rng);
  store_encoder(a, "", state.params);
  store_adam(a, "adam.", state.optimizer);
  return a;
}

Archive to_archive(const MfeState& state) {
  if (state.branches.empty()) throw ContractError("empty ensemble");
  Archive a;
  put_shape(a, state.branches.front().shape, "mfe", state.epoch, state.rng);
  a.set("branches", std::to_string(state.size()));
  a.set("branch_kinds", join_kinds(state.kinds));
  for (std::size_t b = 0; b < state.size(); ++b) {
    const std::string i = std::to_string(b);
    store_encoder(a, "branch." + i + ".", state.branches[b]);
    store_adam(a, "adam." + i + ".", state.optimizers[b]);
  }
  return a;
}

EncoderShape archive_shape(const Archive& archive) {
  if (archive.meta_int("gin_layers") != EncoderTensors<Matrix>::kGinLayers)
    throw SchemaError("archive has an unsupported layer count");
  return {static_cast<int>(archive.meta_int("roi_count")),
          static_cast<int>(archive.meta_int("feature_dim"))};
}

SourceState source_state_from(const Archive& archive) {
  if (archive.meta("kind") != "encoder")
    throw SchemaError("expected an encoder checkpoint, found kind '" +
                      archive.meta("kind") + "'");
  SourceState s;
  s.params = restore_encoder(archive, "", archive_shape(archive));
  s.optimizer = restore_adam(archive, "adam.", s.params);
  s.rng = rng_from_text(archive.meta("rng"));
  s.epoch = static_cast<int>(archive.meta_int("epoch"));
  return s;
}

MfeState mfe_state_from(const Archive& archive) {
  if (archive.meta("kind") != "mfe")
    throw SchemaError("expected an ensemble checkpoint, found kind '" +
                      archive.meta("kind") + "'");
  const EncoderShape shape = archive_shape(archive);
  MfeState s;
  s.kinds = split_kinds(archive.meta("branch_kinds"));
  const long m = archive.meta_int("branches");
  if (m < 1 || static_cast<std::size_t>(m) != s.kinds.size())
    throw SchemaError("archive branch count does not match its kinds");
  for (long b = 0; b < m; ++b) {
    const std::string i = std::to_string(b);
    s.branches.push_back(restore_encoder(archive, "branch." + i + ".", shape));
    s.optimizers.push_back(
        restore_adam(archive, "adam." + i + ".", s.branches.back()));
  }
  s.rng = rng_from_text(archive.meta("rng"));
  s.epoch = static_cast<int>(archive.meta_int("epoch"));
  return s;
}

MfeState load_model(const fs::path& path) {
  const Archive a = load_archive(path);
  if (a.meta("kind") == "encoder") {
    MfeState s = MfeState::single(source_state_from(a).params);
    return s;
  }
  return mfe_state_from(a);
}

EncoderParams load_encoder(const fs::path& path) {
  const Archive a = load_archive(path);
  if (a.meta("kind") == "mfe")
    throw SchemaError(path.string() +
                      " is an ensemble checkpoint; expected an encoder");
  return source_state_from(a).params;
}

}  // namespace sfda
