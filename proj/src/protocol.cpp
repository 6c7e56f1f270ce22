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

#include "fedpdd/protocol.hpp"

#include <algorithm>
#include <future>
#include <stdexcept>
#include <utility>

namespace fedpdd {

void ProtocolConfig::validate() const {
  if (rounds < 0) throw ConfigError("protocol: rounds must be >= 0");
  if (local_epochs < 1 || pretrain_epochs < 1) {
    throw ConfigError("protocol: epoch counts must be >= 1");
  }
  if (local_patience < 0 || pretrain_patience < 0) {
    throw ConfigError("protocol: patience must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("protocol: batch_size must be >= 1");
  if (ensemble_weight < 0.0 || ensemble_weight > 1.0) {
    throw ConfigError("protocol: ensemble_weight must lie in [0, 1]");
  }
  if (!(distill.t_sd > 0.0) || !(distill.t_ed > 0.0)) {
    throw ConfigError("protocol: temperatures must be positive");
  }
  if (distill.beta < 0.0 || distill.gamma < 0.0) {
    throw ConfigError("protocol: loss weights must be >= 0");
  }
  model_a.validate();
  model_b.validate();
  if (model_a.output_classes != model_b.output_classes) {
    throw ConfigError("protocol: parties must agree on output_classes");
  }
  if (privacy) {
    if (!(privacy->epsilon > 0.0)) {
      throw ConfigError("protocol: per-release epsilon must be > 0");
    }
    if (!(privacy->delta > 0.0) || !(privacy->delta < 1.0)) {
      throw ConfigError("protocol: per-release delta must lie in (0, 1)");
    }
    const double needed =
        2.0 * std::max(model_a.logit_clip, model_b.logit_clip);
    if (privacy->sensitivity + 1e-9 < needed) {
      throw ConfigError(
          "protocol: privacy sensitivity must cover twice the logit clip");
    }
  }
}

std::uint64_t RoundLedger::total_units() const {
  std::uint64_t total = 0;
  for (const RoundRecord& r : rounds) total += r.units;
  return total;
}

std::uint64_t RoundLedger::post_initial_units() const {
  std::uint64_t total = 0;
  for (const RoundRecord& r : rounds) {
    if (r.round >= 1) total += r.units;
  }
  return total;
}

namespace {

int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

struct StageOptions {
  int epochs = 1;
  int patience = 0;  // 0 disables early stopping
  bool use_self_teacher = false;
  bool use_ensemble_teacher = false;
  int round_tag = 0;
};

/// Shared epoch loop of pretraining, federated local rounds and the
/// isolated baseline. Consumes the party's shuffle stream once per epoch;
/// captures a best snapshot on strict validation improvement.
TrainStats train_stage(PartyState& party, const ProtocolConfig& cfg,
                       const StageOptions& opt) {
  const std::vector<SampleId>& member_ids = party.train->members(party.id);
  if (member_ids.empty()) {
    throw ConfigError(std::string("protocol: party ") + party_name(party.id) +
                      " has no training samples");
  }
  if (party.validation->members(party.id).empty()) {
    throw ConfigError(std::string("protocol: party ") + party_name(party.id) +
                      " has no validation samples");
  }

  std::optional<LocalModel> self_teacher;
  if (opt.use_self_teacher) self_teacher.emplace(party.best);

  TrainStats stats;
  double sum_ce = 0.0, sum_sd = 0.0, sum_kd = 0.0;
  std::size_t samples_seen = 0;
  int stale_epochs = 0;

  std::vector<SampleId> order(member_ids.begin(), member_ids.end());
  std::vector<FeatureRecord> batch;
  std::vector<std::vector<double>> batch_grads;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    party.shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      batch_grads.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const SampleId id = order[i];
        const FeatureRecord& rec = party.train->record(party.id, id);
        const LogitVector z = party.model.forward(rec);

        std::optional<SoftTarget> ensemble_teacher;
        if (opt.use_ensemble_teacher) {
          const auto it = party.teacher_cache.find(id);
          if (it != party.teacher_cache.end()) ensemble_teacher = it->second;
        }
        std::optional<SoftTarget> self_target;
        if (self_teacher) {
          self_target =
              soft_target(self_teacher->forward(rec), cfg.distill.t_sd);
        }

        const LossBreakdown loss = combined_loss(
            z, party.train->label(id), ensemble_teacher, self_target,
            cfg.distill);
        sum_ce += loss.ce;
        sum_sd += loss.sd;
        sum_kd += loss.kd;
        ++samples_seen;
        batch.push_back(rec);
        batch_grads.push_back(loss.grad);
      }
      const std::vector<double> grad = party.model.backward(batch, batch_grads);
      party.model.adam_step(grad, cfg.optimizer);
    }

    const double accuracy =
        local_accuracy(party.model, party.id, *party.validation);
    stats.validation_accuracy = std::max(stats.validation_accuracy, accuracy);
    ++stats.epochs_run;
    if (accuracy > party.best.score) {
      party.best = party.model.snapshot(opt.round_tag, accuracy);
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (opt.patience > 0 && stale_epochs >= opt.patience) break;
    }
  }

  stats.mean_ce = sum_ce / static_cast<double>(samples_seen);
  stats.mean_sd = sum_sd / static_cast<double>(samples_seen);
  stats.mean_kd = sum_kd / static_cast<double>(samples_seen);
  return stats;
}

}  // namespace

TrainStats pretrain(PartyState& party, const ProtocolConfig& cfg) {
  StageOptions opt;
  opt.epochs = cfg.pretrain_epochs;
  opt.patience = cfg.pretrain_patience;
  opt.round_tag = 0;
  // Cross-entropy only: the best snapshot starts below any reachable
  // accuracy, so the first validation pass always captures one.
  return train_stage(party, cfg, opt);
}

TrainStats local_training_round(PartyState& party, int round,
                                const ProtocolConfig& cfg) {
  StageOptions opt;
  opt.epochs = cfg.local_epochs;
  opt.patience = cfg.local_patience;
  opt.use_self_teacher = cfg.enable_self_distillation;
  opt.use_ensemble_teacher = cfg.enable_federation;
  opt.round_tag = round;
  return train_stage(party, cfg, opt);
}

void federated_ensemble(PartyState& party_a, PartyState& party_b,
                        EnsembleServer& server,
                        const std::vector<SampleId>& overlapped,
                        const std::optional<NoiseCalibration>& noise,
                        Rng& noise_rng, BudgetLedger& budget, int round) {
  if (overlapped.empty()) {
    throw ProtocolError(
        "federated_ensemble: no knowledge-transfer channel (empty overlap)");
  }
  if (party_a.best.params.empty() || party_b.best.params.empty()) {
    throw ProtocolError("federated_ensemble: parties must hold best snapshots");
  }

  const auto upload = [&overlapped, &noise,
                       &noise_rng](PartyState& party) {
    const LocalModel best(party.best);
    std::vector<PerturbedUpload> uploads;
    uploads.reserve(overlapped.size());
    for (SampleId id : overlapped) {
      LogitVector z =
          best.forward_clipped(party.train->record(party.id, id));
      if (noise) z = perturb(z, *noise, noise_rng);
      uploads.push_back(PerturbedUpload{id, std::move(z)});
    }
    return uploads;
  };
  const std::vector<PerturbedUpload> from_a = upload(party_a);
  const std::vector<PerturbedUpload> from_b = upload(party_b);

  const auto teachers = server.aggregate(from_a, from_b);
  party_a.teacher_cache.clear();
  party_b.teacher_cache.clear();
  for (const auto& [id, target] : teachers) {
    party_a.teacher_cache.emplace(id, target);
    party_b.teacher_cache.emplace(id, target);
  }

  if (noise && noise->sigma > 0.0) {
    budget.record_release(Party::A, round, overlapped.size(), noise->spec);
    budget.record_release(Party::B, round, overlapped.size(), noise->spec);
  }
}

namespace {

/// Shared skeleton of run() and run_local_baseline(): pretraining, then
/// `rounds` iterations of per-party stages; the caller's `after_round`
/// hook runs the ensemble barrier (or nothing for the baseline).
template <typename StageFn, typename BarrierFn>
ProtocolResult orchestrate(const ProtocolConfig& cfg,
                           const DatasetViews& views,
                           StageFn&& round_stage, BarrierFn&& after_round) {
  ProtocolResult result;

  PartyState party_a(Party::A, LocalModel(cfg.model_a, split_seed(cfg.seed, 0)),
                     views.train, views.validation,
                     Rng(split_seed(cfg.seed, 2)));
  PartyState party_b(Party::B, LocalModel(cfg.model_b, split_seed(cfg.seed, 1)),
                     views.train, views.validation,
                     Rng(split_seed(cfg.seed, 3)));

  RoundRecord initial;
  initial.round = 0;
  {
    auto future_a = std::async(std::launch::async,
                               [&] { return pretrain(party_a, cfg); });
    initial.party[1] = pretrain(party_b, cfg);
    initial.party[0] = future_a.get();
  }
  after_round(party_a, party_b, 0, initial);
  result.rounds.rounds.push_back(initial);

  for (int round = 1; round <= cfg.rounds; ++round) {
    RoundRecord record;
    record.round = round;
    {
      auto future_a = std::async(std::launch::async, [&] {
        return round_stage(party_a, round);
      });
      record.party[1] = round_stage(party_b, round);
      record.party[0] = future_a.get();
    }
    after_round(party_a, party_b, round, record);
    result.rounds.rounds.push_back(record);
  }

  result.best_a = party_a.best;
  result.best_b = party_b.best;
  return result;
}

}  // namespace

ProtocolResult run(const ProtocolConfig& cfg,
                   const DatasetViews& views) {
  cfg.validate();

  EnsembleServer server(cfg.ensemble_weight, cfg.distill.t_ed);
  Rng noise_rng(split_seed(cfg.seed, 4));
  std::optional<NoiseCalibration> noise;
  if (cfg.privacy) noise = calibrate(*cfg.privacy);

  BudgetLedger budget;
  std::uint64_t seen_up = 0, seen_down = 0, seen_units = 0;
  const auto barrier = [&](PartyState& a, PartyState& b, int round,
                           RoundRecord& record) {
    if (!cfg.enable_federation) return;
    federated_ensemble(a, b, server, views.train.overlapped(), noise,
                       noise_rng, budget, round);
    record.messages_up = server.messages_up() - seen_up;
    record.messages_down = server.messages_down() - seen_down;
    record.units = server.units() - seen_units;
    seen_up = server.messages_up();
    seen_down = server.messages_down();
    seen_units = server.units();
  };

  ProtocolResult result = orchestrate(
      cfg, views,
      [&cfg](PartyState& party, int round) {
        return local_training_round(party, round, cfg);
      },
      barrier);
  result.budget = std::move(budget);
  return result;
}

ProtocolResult run_local_baseline(const ProtocolConfig& cfg,
                                  const DatasetViews& views) {
  cfg.validate();
  return orchestrate(
      cfg, views,
      [&cfg](PartyState& party, int round) {
        StageOptions opt;
        opt.epochs = cfg.local_epochs;
        opt.patience = cfg.local_patience;
        opt.round_tag = round;  // both teachers stay absent
        return train_stage(party, cfg, opt);
      },
      [](PartyState&, PartyState&, int, RoundRecord&) {});
}

Prediction predict(const LocalModel& best_a, const LocalModel& best_b,
                   const VerticalDataset& data, SampleId id, double w) {
  const bool in_a = data.contains(Party::A, id);
  const bool in_b = data.contains(Party::B, id);
  if (!in_a && !in_b) {
    throw std::out_of_range("predict: sample " + std::to_string(id) +
                            " held by neither party");
  }

  Prediction out;
  if (in_a && in_b) {
    const SoftTarget pa =
        soft_target(best_a.forward(data.record(Party::A, id)), 1.0);
    const SoftTarget pb =
        soft_target(best_b.forward(data.record(Party::B, id)), 1.0);
    out.probabilities.resize(pa.probs.size());
    for (std::size_t i = 0; i < pa.probs.size(); ++i) {
      out.probabilities[i] = w * pa.probs[i] + (1.0 - w) * pb.probs[i];
    }
  } else if (in_a) {
    out.probabilities =
        soft_target(best_a.forward(data.record(Party::A, id)), 1.0).probs;
  } else {
    out.probabilities =
        soft_target(best_b.forward(data.record(Party::B, id)), 1.0).probs;
  }
  out.label = argmax_lowest(out.probabilities);
  return out;
}

double local_accuracy(const LocalModel& model, Party p,
                      const VerticalDataset& view) {
  const std::vector<SampleId>& ids = view.members(p);
  if (ids.empty()) return 0.0;
  std::size_t correct = 0;
  for (SampleId id : ids) {
    const LogitVector z = model.forward(view.record(p, id));
    if (argmax_lowest(z.values) == view.label(id)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

}  // namespace fedpdd
