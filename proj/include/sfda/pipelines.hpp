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
#pragma once

// Training procedures and ensemble inference.
//
//   pretrain_unsupervised  m randomly initialized branches fitted to the
//                          mutual-consistency loss on unlabeled data
//   train_source           one branch, full-length windows, cross-entropy
//   adapt_target           m copies of the source model fitted to the
//                          mutual-consistency loss on the unlabeled target
//   ensemble_predict       mean of the branch probabilities on the
//                          neutral (un-augmented) view
//
// Every procedure is a deterministic function of its inputs and seed.
// Training state (parameters, optimizer moments, RNG, epoch) can be
// checkpointed at epoch boundaries and resumed exactly.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sfda/checkpoint.hpp"
#include "sfda/data.hpp"
#include "sfda/encoder.hpp"
#include "sfda/enrichment.hpp"
#include "sfda/objectives.hpp"
#include "sfda/optimizer.hpp"

namespace sfda {

struct TrainConfig {
  int batch_size = 64;
  double lr0 = 3e-4;
  double lr_decay_factor = 0.5;
  int lr_decay_every = 50;
  int epochs = 150;
  std::uint64_t seed = 0;
  std::vector<EnrichmentKind> branch_kinds{EnrichmentKind::kWarp,
                                           EnrichmentKind::kReceptiveField,
                                           EnrichmentKind::kSlice};
  AdamConfig adam;
  double norm_momentum = 0.1;
  // Keep normalization running statistics fixed during consistency
  // training.
  bool freeze_norm_stats = false;
  PairMode pairs = PairMode::kOrdered;

  void validate() const;
};

// lr0 * factor^floor(epoch / every)
double lr_at(int epoch, const TrainConfig& cfg);

// How subjects become graph sequences and how large the encoder is.
struct ModelContext {
  GraphConfig graph;
  EnrichmentDomains domains;
  int feature_dim = 64;
};

struct SourceState {
  EncoderParams params;
  Adam optimizer;
  std::mt19937_64 rng;
  int epoch = 0;  // completed epochs
};

struct MfeState {
  std::vector<EncoderParams> branches;
  std::vector<EnrichmentKind> kinds;
  std::vector<Adam> optimizers;
  std::mt19937_64 rng;
  int epoch = 0;

  std::size_t size() const { return branches.size(); }
  // Wraps a single encoder as a one-branch ensemble (kind none).
  static MfeState single(const EncoderParams& params);
};

struct EpochRecord {
  int epoch = 0;  // 0-based index of the completed epoch
  double loss = 0;
  double lr = 0;
  std::optional<double> val_auc;
};

template <class State>
struct RunHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Called with the full state after every completed epoch.
  std::function<void(const State&)> on_state;
  // Returning true ends training after the current epoch.
  std::function<bool(const State&)> stop;
  std::function<void(const std::string&)> warn;
};

MfeState pretrain_unsupervised(const UnlabeledCohort& auxiliary,
                               const TrainConfig& cfg, const ModelContext& ctx,
                               const RunHooks<MfeState>& hooks = {},
                               std::optional<MfeState> resume = std::nullopt);

EncoderParams init_source_from_pretrain(const MfeState& state);

SourceState train_source(const std::vector<RoiTimeseries>& source,
                         const std::optional<EncoderParams>& init,
                         const TrainConfig& cfg, const ModelContext& ctx,
                         const RunHooks<SourceState>& hooks = {},
                         std::optional<SourceState> resume = std::nullopt,
                         const std::vector<RoiTimeseries>* validation = nullptr);

// Never touches labels: the cohort withholds them and no label accessor is
// called.
MfeState adapt_target(const UnlabeledCohort& target,
                      const EncoderParams& source_params,
                      const TrainConfig& cfg, const ModelContext& ctx,
                      const RunHooks<MfeState>& hooks = {},
                      std::optional<MfeState> resume = std::nullopt);

struct InferenceOptions {
  // 0: every branch sees the neutral view. k > 0: each branch averages its
  // probability over k randomly enriched views.
  int stochastic_views = 0;
  std::uint64_t seed = 0;
};

struct EnsemblePrediction {
  double probability = 0.5;
  std::vector<BranchOutput> branches;
};

double ensemble_predict(const RoiTimeseries& subject, const MfeState& state,
                        const ModelContext& ctx,
                        const InferenceOptions& options = {});

std::vector<EnsemblePrediction> ensemble_predict_many(
    const std::vector<RoiTimeseries>& subjects, const MfeState& state,
    const ModelContext& ctx, const InferenceOptions& options = {});

// Consistency loss of a batch on fixed enrichment parameters, evaluated in
// eval mode (used for diagnostics and the initialization-identity check).
double consistency_on_views(const std::vector<RoiTimeseries>& subjects,
                            const MfeState& state, const ModelContext& ctx,
                            const std::vector<EnrichmentParams>& views,
                            PairMode pairs = PairMode::kOrdered);

// Checkpoint archives.
Archive to_archive(const SourceState& state);
Archive to_archive(const MfeState& state);
SourceState source_state_from(const Archive& archive);
MfeState mfe_state_from(const Archive& archive);
// Accepts either kind; an encoder checkpoint becomes a one-branch ensemble.
MfeState load_model(const fs::path& path);
// Accepts an encoder checkpoint only.
EncoderParams load_encoder(const fs::path& path);
EncoderShape archive_shape(const Archive& archive);

}  // namespace sfda
