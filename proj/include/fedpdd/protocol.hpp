// Copyright 2026 The fedpdd-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPDD_PROTOCOL_HPP
#define FEDPDD_PROTOCOL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fedpdd/dataset.hpp"
#include "fedpdd/distill.hpp"
#include "fedpdd/model.hpp"
#include "fedpdd/privacy.hpp"
#include "fedpdd/rng.hpp"
#include "fedpdd/server.hpp"
#include "fedpdd/types.hpp"

namespace fedpdd {

/// Full run configuration. The two model configs may differ (each party
/// designs its own architecture); output_classes must agree so the server
/// can average logits.
struct ProtocolConfig {
  int rounds = 5;            // federated rounds n (after the initial ensemble)
  int local_epochs = 5;      // per round
  int local_patience = 2;    // consecutive non-improving epochs; 0 disables
  int pretrain_epochs = 10;
  int pretrain_patience = 3;
  int batch_size = 1024;
  double ensemble_weight = 0.5;  // w, party A's share of the logit average

  DistillConfig distill;
  OptimizerConfig optimizer;
  ModelConfig model_a;
  ModelConfig model_b;

  /// Per-release budget for every uploaded logit vector; absent = noiseless.
  std::optional<PrivacySpec> privacy;

  bool enable_self_distillation = true;
  /// When false no ensemble ever runs: pure isolated local training.
  bool enable_federation = true;

  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Everything one party owns during a run. The teacher cache holds the
/// latest ensemble soft targets, keyed by overlapped sample id.
struct PartyState {
  Party id = Party::A;
  LocalModel model;
  ModelSnapshot best;
  const VerticalDataset* train = nullptr;
  const VerticalDataset* validation = nullptr;
  std::map<SampleId, SoftTarget> teacher_cache;
  Rng shuffle_rng;

  PartyState(Party party, LocalModel m, const VerticalDataset& train_view,
             const VerticalDataset& validation_view, Rng rng)
      : id(party),
        model(std::move(m)),
        train(&train_view),
        validation(&validation_view),
        shuffle_rng(rng) {
    best.score = -1.0;  // below any accuracy: first validation always captures
  }
};

/// Training statistics of one stage (pretraining or one local round).
struct TrainStats {
  double validation_accuracy = 0.0;  // best seen within the stage
  double mean_ce = 0.0;
  double mean_sd = 0.0;
  double mean_kd = 0.0;
  int epochs_run = 0;
};

struct RoundRecord {
  int round = 0;  // 0 = pretraining + initial ensemble
  std::uint64_t messages_up = 0;
  std::uint64_t messages_down = 0;
  std::uint64_t units = 0;  // uploaded logit components
  TrainStats party[2];
};

struct RoundLedger {
  std::vector<RoundRecord> rounds;

  /// Uploaded logit components across every aggregation, initial included.
  std::uint64_t total_units() const;
  /// Uploaded logit components of the post-initial rounds only; equals
  /// 2*m*n*|D^c| for n rounds over |D^c| overlapped samples.
  std::uint64_t post_initial_units() const;
};

struct ProtocolResult {
  ModelSnapshot best_a;
  ModelSnapshot best_b;
  RoundLedger rounds;
  BudgetLedger budget;
};

/// Cross-entropy-only training of a freshly initialized model; captures the
/// best validation snapshot. Throws ConfigError on an empty training or
/// validation view.
TrainStats pretrain(PartyState& party, const ProtocolConfig& cfg);

/// One synchronization barrier: both parties release clipped, perturbed
/// best-model logits for every overlapped id; the server returns the
/// ensemble soft target, which replaces both teacher caches. Records one
/// privacy release per (party, sample) when noise is enabled. Throws
/// ProtocolError when `overlapped` is empty.
void federated_ensemble(PartyState& party_a, PartyState& party_b,
                        EnsembleServer& server,
                        const std::vector<SampleId>& overlapped,
                        const std::optional<NoiseCalibration>& noise,
                        Rng& noise_rng, BudgetLedger& budget, int round);

/// One round of local training against the frozen self teacher (the best
/// snapshot at round start) and the cached ensemble teacher (overlapped
/// samples only). Captures a new best snapshot on strict validation
/// improvement.
TrainStats local_training_round(PartyState& party, int round,
                                const ProtocolConfig& cfg);

/// Full protocol: pretraining, an initial ensemble, then `rounds` iterations
/// of (local training for both parties, ensemble). Deterministic given
/// cfg.seed. With enable_federation=false no ensemble runs and the result
/// matches run_local_baseline bit for bit under equal seeds and weights.
ProtocolResult run(const ProtocolConfig& cfg,
                   const DatasetViews& views);

/// Isolated per-party training (no server, no teachers): pretraining plus
/// `rounds` rounds of cross-entropy-only local epochs. The comparison
/// baseline for every experiment.
ProtocolResult run_local_baseline(const ProtocolConfig& cfg,
                                  const DatasetViews& views);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Joint inference: aligned samples get the weighted average of both
/// parties' softmax outputs, others the owning party's local prediction.
/// Ties break toward the lowest class index. Throws std::out_of_range when
/// neither party holds the sample.
Prediction predict(const LocalModel& best_a, const LocalModel& best_b,
                   const VerticalDataset& data, SampleId id, double w);

/// Fraction of `view`'s members of party `p` whose argmax logit matches the
/// label (lowest index on ties). Returns 0 for an empty view.
double local_accuracy(const LocalModel& model, Party p,
                      const VerticalDataset& view);

}  // namespace fedpdd

#endif  // FEDPDD_PROTOCOL_HPP
