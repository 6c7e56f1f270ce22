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

#include <doctest.h>

#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpdd/dataset.hpp"
#include "fedpdd/distill.hpp"
#include "fedpdd/model.hpp"
#include "fedpdd/privacy.hpp"
#include "fedpdd/rng.hpp"
#include "fedpdd/server.hpp"
#include "fedpdd/types.hpp"

namespace {

using fedpdd::BudgetLedger;
using fedpdd::ConfigError;
using fedpdd::DatasetViews;
using fedpdd::EnsembleServer;
using fedpdd::FieldLayout;
using fedpdd::LocalModel;
using fedpdd::LogitVector;
using fedpdd::ModelConfig;
using fedpdd::Party;
using fedpdd::PartyState;
using fedpdd::PerturbedUpload;
using fedpdd::PrivacySpec;
using fedpdd::ProtocolConfig;
using fedpdd::ProtocolError;
using fedpdd::ProtocolResult;
using fedpdd::Rng;
using fedpdd::SampleId;
using fedpdd::SoftTarget;
using fedpdd::SyntheticSpec;
using fedpdd::VerticalDataset;

DatasetViews make_views(int samples, double alpha, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.samples = samples;
  spec.fields_per_party = 2;
  spec.vocab_size = 8;
  const auto records = fedpdd::synthesize(spec, seed);
  const VerticalDataset data = fedpdd::vertical_split(
      records, fedpdd::synthetic_assignment(spec), alpha,
      fedpdd::split_seed(seed, 5), fedpdd::synthetic_layout(spec));
  fedpdd::SplitSpec split;
  split.seed = fedpdd::split_seed(seed, 6);
  return fedpdd::train_val_test_split(data, split);
}

ProtocolConfig micro_config(const DatasetViews& views) {
  ProtocolConfig cfg;
  cfg.rounds = 2;
  cfg.local_epochs = 2;
  cfg.local_patience = 0;
  cfg.pretrain_epochs = 2;
  cfg.pretrain_patience = 0;
  cfg.batch_size = 128;
  cfg.model_a = ModelConfig::for_layout(views.train.layout(Party::A));
  cfg.model_b = ModelConfig::for_layout(views.train.layout(Party::B));
  for (ModelConfig* m : {&cfg.model_a, &cfg.model_b}) {
    m->embedding_dim = 2;
    m->hidden_widths = {4};
  }
  cfg.distill.beta = 1.0;
  cfg.distill.gamma = 1.0;
  cfg.distill.t_sd = 4.0;
  cfg.distill.t_ed = 4.0;
  cfg.seed = 99;
  return cfg;
}

LogitVector logits(std::vector<double> v) {
  return LogitVector{std::move(v)};
}

std::vector<PerturbedUpload> uploads(const std::vector<SampleId>& ids,
                                     const LogitVector& z) {
  std::vector<PerturbedUpload> out;
  for (SampleId id : ids) out.push_back(PerturbedUpload{id, z});
  return out;
}

/// All-zero model whose head biases pin the two output logits.
LocalModel bias_model(const FieldLayout& layout, double b0, double b1) {
  ModelConfig cfg = ModelConfig::for_layout(layout);
  cfg.embedding_dim = 2;
  cfg.hidden_widths = {3};
  LocalModel model(cfg, 0);
  for (std::size_t i = 0; i < model.parameter_count(); ++i) {
    model.parameter(i) = 0.0;
  }
  for (const auto& g : model.groups()) {
    if (g.name == "mlp.b1") {
      model.parameter(g.offset + 0) = b0;
      model.parameter(g.offset + 1) = b1;
    }
  }
  return model;
}

}  // namespace

TEST_CASE("protocol config: semantic validation") {
  const DatasetViews views = make_views(200, 0.3, 1);
  const ProtocolConfig good = micro_config(views);
  CHECK_NOTHROW(good.validate());

  ProtocolConfig bad = good;
  bad.rounds = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.local_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.ensemble_weight = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.distill.t_ed = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.distill.beta = -0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = good;
  bad.model_b.output_classes = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // Releasing logits clipped to C requires sensitivity of at least 2C.
  bad = good;
  PrivacySpec privacy;
  privacy.sensitivity = 1.0;
  bad.privacy = privacy;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.privacy->sensitivity =
      2.0 * std::max(good.model_a.logit_clip, good.model_b.logit_clip);
  CHECK_NOTHROW(bad.validate());
  bad.privacy->epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ensemble server: equal weights average opposing votes to a tie") {
  EnsembleServer server(0.5, 1.0);
  const auto targets = server.aggregate(uploads({4}, logits({2.0, 0.0})),
                                        uploads({4}, logits({0.0, 2.0})));
  REQUIRE(targets.size() == 1);
  CHECK(targets[0].first == 4);
  CHECK(targets[0].second[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(targets[0].second[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("ensemble server: boundary weights forward one party's logits") {
  const LogitVector za = logits({1.5, -0.5});
  const LogitVector zb = logits({-2.0, 1.0});
  EnsembleServer all_a(1.0, 2.0);
  const auto ta = all_a.aggregate(uploads({1}, za), uploads({1}, zb));
  CHECK(ta[0].second.probs == fedpdd::soft_target(za, 2.0).probs);

  EnsembleServer all_b(0.0, 2.0);
  const auto tb = all_b.aggregate(uploads({1}, za), uploads({1}, zb));
  CHECK(tb[0].second.probs == fedpdd::soft_target(zb, 2.0).probs);
}

TEST_CASE("ensemble server: unit accounting per aggregation") {
  EnsembleServer server(0.5, 1.0);
  std::vector<SampleId> ids(100);
  for (SampleId i = 0; i < 100; ++i) ids[i] = i;
  const LogitVector z = logits({0.3, -0.3});

  server.aggregate(uploads(ids, z), uploads(ids, z));
  // 100 overlapped samples, two classes: 2 * 100 * 2 = 400 components.
  CHECK(server.units() == 400);
  CHECK(server.messages_up() == 200);
  CHECK(server.messages_down() == 200);
  CHECK(server.rounds_completed() == 1);

  server.aggregate(uploads(ids, z), uploads(ids, z));
  CHECK(server.units() == 800);
  CHECK(server.rounds_completed() == 2);
}

TEST_CASE("ensemble server: malformed upload batches are rejected") {
  EnsembleServer server(0.5, 1.0);
  const LogitVector z2 = logits({1.0, 0.0});
  CHECK_THROWS_AS(server.aggregate({}, {}), ProtocolError);
  CHECK_THROWS_AS(server.aggregate(uploads({1, 2}, z2), uploads({1}, z2)),
                  ProtocolError);
  CHECK_THROWS_AS(server.aggregate(uploads({1}, z2), uploads({2}, z2)),
                  ProtocolError);
  CHECK_THROWS_AS(
      server.aggregate(uploads({1}, z2), uploads({1}, logits({1, 2, 3}))),
      ProtocolError);
  CHECK_THROWS_AS(EnsembleServer(-0.1, 1.0), ConfigError);
  CHECK_THROWS_AS(EnsembleServer(1.1, 1.0), ConfigError);
  CHECK_THROWS_AS(EnsembleServer(0.5, 0.0), ConfigError);
}

TEST_CASE("run: the communication ledger satisfies the closed form") {
  const DatasetViews views = make_views(600, 0.3, 3);
  ProtocolConfig cfg = micro_config(views);
  cfg.rounds = 3;
  const ProtocolResult result = fedpdd::run(cfg, views);

  const std::uint64_t dc = views.train.overlapped().size();
  REQUIRE(dc > 0);
  REQUIRE(result.rounds.rounds.size() == 4);  // initial plus three rounds
  const std::uint64_t m = 2;
  CHECK(result.rounds.rounds[0].units == 2 * m * dc);
  CHECK(result.rounds.post_initial_units() == 2 * m * 3 * dc);
  CHECK(result.rounds.total_units() ==
        result.rounds.post_initial_units() + 2 * m * dc);
  for (const auto& record : result.rounds.rounds) {
    CHECK(record.messages_up == 2 * dc);
    CHECK(record.messages_down == 2 * dc);
  }
}

TEST_CASE("run: federation off reproduces the isolated baseline bit for bit") {
  const DatasetViews views = make_views(400, 0.25, 5);
  ProtocolConfig cfg = micro_config(views);
  cfg.enable_federation = false;
  cfg.enable_self_distillation = false;

  const ProtocolResult fed = fedpdd::run(cfg, views);
  const ProtocolResult base = fedpdd::run_local_baseline(cfg, views);

  CHECK(fed.best_a.params == base.best_a.params);
  CHECK(fed.best_b.params == base.best_b.params);
  CHECK(fed.best_a.score == base.best_a.score);
  CHECK(fed.best_b.score == base.best_b.score);
  REQUIRE(fed.rounds.rounds.size() == base.rounds.rounds.size());
  for (std::size_t i = 0; i < fed.rounds.rounds.size(); ++i) {
    CHECK(fed.rounds.rounds[i].units == 0);
    for (int p = 0; p < 2; ++p) {
      const auto& x = fed.rounds.rounds[i].party[p];
      const auto& y = base.rounds.rounds[i].party[p];
      CHECK(x.validation_accuracy == y.validation_accuracy);
      CHECK(x.mean_ce == y.mean_ce);
      CHECK(x.mean_sd == y.mean_sd);
      CHECK(x.mean_kd == y.mean_kd);
      CHECK(x.epochs_run == y.epochs_run);
    }
  }
}

TEST_CASE("run: deterministic per seed") {
  const DatasetViews views = make_views(300, 0.3, 7);
  const ProtocolConfig cfg = micro_config(views);
  const ProtocolResult r1 = fedpdd::run(cfg, views);
  const ProtocolResult r2 = fedpdd::run(cfg, views);
  CHECK(r1.best_a.params == r2.best_a.params);
  CHECK(r1.best_b.params == r2.best_b.params);

  ProtocolConfig other = cfg;
  other.seed = cfg.seed + 1;
  const ProtocolResult r3 = fedpdd::run(other, views);
  CHECK(r1.best_a.params != r3.best_a.params);
}

TEST_CASE("run: zero rounds degenerates to pretraining plus one ensemble") {
  const DatasetViews views = make_views(300, 0.3, 9);
  ProtocolConfig cfg = micro_config(views);
  cfg.rounds = 0;
  const ProtocolResult result = fedpdd::run(cfg, views);
  REQUIRE(result.rounds.rounds.size() == 1);
  CHECK(result.rounds.post_initial_units() == 0);
  CHECK(result.rounds.rounds[0].units ==
        2 * 2 * views.train.overlapped().size());
  CHECK(result.best_a.tag == 0);
  CHECK(result.best_b.tag == 0);
}

TEST_CASE("run: best snapshots score exactly their validation accuracy") {
  const DatasetViews views = make_views(500, 0.2, 11);
  const ProtocolConfig cfg = micro_config(views);
  const ProtocolResult result = fedpdd::run(cfg, views);
  CHECK(fedpdd::local_accuracy(LocalModel(result.best_a), Party::A,
                               views.validation) == result.best_a.score);
  CHECK(fedpdd::local_accuracy(LocalModel(result.best_b), Party::B,
                               views.validation) == result.best_b.score);
}

TEST_CASE("run: noisy runs record one release per party per ensemble") {
  const DatasetViews views = make_views(400, 0.3, 13);
  ProtocolConfig cfg = micro_config(views);
  cfg.rounds = 2;
  PrivacySpec privacy;
  privacy.epsilon = 1.0;
  privacy.delta = 1e-5;
  privacy.sensitivity =
      2.0 * std::max(cfg.model_a.logit_clip, cfg.model_b.logit_clip);
  cfg.privacy = privacy;

  const ProtocolResult result = fedpdd::run(cfg, views);
  const double dc = static_cast<double>(views.train.overlapped().size());
  // Three ensembles (initial plus two rounds), one release batch per party.
  CHECK(result.budget.entries().size() == 6);
  CHECK(result.budget.epsilon_total(Party::A) ==
        doctest::Approx(3.0 * dc * 1.0).epsilon(1e-12));
  CHECK(result.budget.delta_total(Party::B) ==
        doctest::Approx(3.0 * dc * 1e-5).epsilon(1e-12));

  // The same run without privacy keeps the ledger empty.
  ProtocolConfig clean = micro_config(views);
  CHECK(fedpdd::run(clean, views).budget.entries().empty());
}

TEST_CASE("stagewise: best scores never decrease and teachers stay frozen") {
  const DatasetViews views = make_views(400, 0.3, 15);
  ProtocolConfig cfg = micro_config(views);
  cfg.validate();

  PartyState a(Party::A, LocalModel(cfg.model_a, fedpdd::split_seed(cfg.seed, 0)),
               views.train, views.validation,
               Rng(fedpdd::split_seed(cfg.seed, 2)));
  PartyState b(Party::B, LocalModel(cfg.model_b, fedpdd::split_seed(cfg.seed, 1)),
               views.train, views.validation,
               Rng(fedpdd::split_seed(cfg.seed, 3)));

  fedpdd::pretrain(a, cfg);
  fedpdd::pretrain(b, cfg);
  CHECK(a.best.score >= 0.0);
  REQUIRE_FALSE(a.best.params.empty());

  EnsembleServer server(cfg.ensemble_weight, cfg.distill.t_ed);
  Rng noise_rng(fedpdd::split_seed(cfg.seed, 4));
  BudgetLedger budget;
  const std::vector<SampleId>& overlapped = views.train.overlapped();

  fedpdd::federated_ensemble(a, b, server, overlapped, std::nullopt,
                             noise_rng, budget, 0);
  REQUIRE(a.teacher_cache.size() == overlapped.size());

  // The cached teacher must equal the ensemble of the best snapshots at
  // the time of the exchange — recomputed here from the released models.
  const auto expected_cache = [&](const fedpdd::ModelSnapshot& snap_a,
                                  const fedpdd::ModelSnapshot& snap_b) {
    const LocalModel best_a(snap_a);
    const LocalModel best_b(snap_b);
    std::map<SampleId, SoftTarget> expected;
    for (SampleId id : overlapped) {
      const LogitVector za =
          best_a.forward_clipped(views.train.record(Party::A, id));
      const LogitVector zb =
          best_b.forward_clipped(views.train.record(Party::B, id));
      LogitVector combined{std::vector<double>(za.size())};
      for (std::size_t i = 0; i < za.size(); ++i) {
        combined[i] = cfg.ensemble_weight * za[i] +
                      (1.0 - cfg.ensemble_weight) * zb[i];
      }
      expected.emplace(id, fedpdd::soft_target(combined, cfg.distill.t_ed));
    }
    return expected;
  };
  const auto caches_match = [&](const std::map<SampleId, SoftTarget>& cache,
                                const std::map<SampleId, SoftTarget>& want) {
    if (cache.size() != want.size()) return false;
    for (SampleId id : overlapped) {
      if (cache.at(id).probs != want.at(id).probs) return false;
    }
    return true;
  };

  CHECK(caches_match(a.teacher_cache, expected_cache(a.best, b.best)));
  CHECK(caches_match(b.teacher_cache, expected_cache(a.best, b.best)));

  // Local training moves the live models but must not touch the cache
  // until the next exchange; the best score is monotone across stages and
  // every fresh exchange reflects exactly the bests of that moment.
  std::map<SampleId, SoftTarget> last_exchange = a.teacher_cache;
  double best_score_a = a.best.score;
  for (int round = 1; round <= 2; ++round) {
    fedpdd::local_training_round(a, round, cfg);
    fedpdd::local_training_round(b, round, cfg);
    CHECK(a.best.score >= best_score_a);
    best_score_a = a.best.score;
    CHECK(caches_match(a.teacher_cache, last_exchange));

    fedpdd::federated_ensemble(a, b, server, overlapped, std::nullopt,
                               noise_rng, budget, round);
    const auto fresh = expected_cache(a.best, b.best);
    CHECK(caches_match(a.teacher_cache, fresh));
    CHECK(caches_match(b.teacher_cache, fresh));
    last_exchange = a.teacher_cache;
  }
}

TEST_CASE("stagewise: patience stops training once accuracy stalls") {
  const DatasetViews views = make_views(300, 0.3, 17);
  ProtocolConfig cfg = micro_config(views);
  cfg.pretrain_epochs = 10;
  cfg.optimizer.learning_rate = 0.0;  // the model, hence accuracy, never moves

  cfg.pretrain_patience = 1;
  PartyState stopped(Party::A, LocalModel(cfg.model_a, 1), views.train,
                     views.validation, Rng(2));
  CHECK(fedpdd::pretrain(stopped, cfg).epochs_run == 2);

  cfg.pretrain_patience = 0;  // disabled: all epochs run
  PartyState full(Party::A, LocalModel(cfg.model_a, 1), views.train,
                  views.validation, Rng(2));
  CHECK(fedpdd::pretrain(full, cfg).epochs_run == 10);
}

TEST_CASE("federated_ensemble: guards its preconditions") {
  const DatasetViews views = make_views(200, 0.3, 19);
  ProtocolConfig cfg = micro_config(views);
  PartyState a(Party::A, LocalModel(cfg.model_a, 1), views.train,
               views.validation, Rng(2));
  PartyState b(Party::B, LocalModel(cfg.model_b, 1), views.train,
               views.validation, Rng(3));
  EnsembleServer server(0.5, 1.0);
  Rng noise_rng(4);
  BudgetLedger budget;

  CHECK_THROWS_AS(fedpdd::federated_ensemble(a, b, server, {}, std::nullopt,
                                             noise_rng, budget, 0),
                  ProtocolError);
  // No pretraining happened, so there are no best snapshots to release.
  CHECK_THROWS_AS(
      fedpdd::federated_ensemble(a, b, server, views.train.overlapped(),
                                 std::nullopt, noise_rng, budget, 0),
      ProtocolError);
}

TEST_CASE("predict: weighted probability vote with lowest-index ties") {
  SyntheticSpec spec;
  spec.samples = 60;
  spec.fields_per_party = 2;
  spec.vocab_size = 8;
  const auto records = fedpdd::synthesize(spec, 21);
  const VerticalDataset data = fedpdd::vertical_split(
      records, fedpdd::synthetic_assignment(spec), 0.3, 23,
      fedpdd::synthetic_layout(spec));

  // A always votes class 0, B always votes class 1, equally confidently.
  const LocalModel model_a = bias_model(data.layout(Party::A), 1.0, 0.0);
  const LocalModel model_b = bias_model(data.layout(Party::B), 0.0, 1.0);

  const SampleId aligned = data.overlapped().front();
  const auto tie = fedpdd::predict(model_a, model_b, data, aligned, 0.5);
  CHECK(tie.probabilities[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tie.probabilities[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tie.label == 0);  // exact tie resolves to the lowest class index

  CHECK(fedpdd::predict(model_a, model_b, data, aligned, 0.9).label == 0);
  CHECK(fedpdd::predict(model_a, model_b, data, aligned, 0.1).label == 1);

  // Samples held by one party use that party's local prediction alone.
  SampleId only_a = 0;
  SampleId only_b = 0;
  bool found_a = false;
  bool found_b = false;
  for (SampleId id : data.members(Party::A)) {
    if (!data.contains(Party::B, id)) {
      only_a = id;
      found_a = true;
      break;
    }
  }
  for (SampleId id : data.members(Party::B)) {
    if (!data.contains(Party::A, id)) {
      only_b = id;
      found_b = true;
      break;
    }
  }
  REQUIRE(found_a);
  REQUIRE(found_b);
  CHECK(fedpdd::predict(model_a, model_b, data, only_a, 0.1).label == 0);
  CHECK(fedpdd::predict(model_a, model_b, data, only_b, 0.9).label == 1);

  CHECK_THROWS_AS(fedpdd::predict(model_a, model_b, data, 9999, 0.5),
                  std::out_of_range);
}

TEST_CASE("local_accuracy: fraction of members whose argmax hits the label") {
  SyntheticSpec spec;
  spec.samples = 80;
  spec.fields_per_party = 2;
  spec.vocab_size = 8;
  const auto records = fedpdd::synthesize(spec, 25);
  const VerticalDataset data = fedpdd::vertical_split(
      records, fedpdd::synthetic_assignment(spec), 0.4, 27,
      fedpdd::synthetic_layout(spec));

  const LocalModel zero_votes = bias_model(data.layout(Party::A), 1.0, 0.0);
  double zeros = 0.0;
  for (SampleId id : data.members(Party::A)) {
    if (data.label(id) == 0) zeros += 1.0;
  }
  const double expected =
      zeros / static_cast<double>(data.party_size(Party::A));
  CHECK(fedpdd::local_accuracy(zero_votes, Party::A, data) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("server header: only ids, logits and soft targets are reachable") {
  // Data-minimization audit: the aggregator's translation unit must not be
  // able to name features, labels, models or datasets.
  std::ifstream in(std::string(FEDPDD_SOURCE_DIR) +
                   "/include/fedpdd/server.hpp");
  REQUIRE(in.is_open());
  const std::set<std::string> allowed_project = {"fedpdd/distill.hpp",
                                                 "fedpdd/types.hpp"};
  const std::set<std::string> allowed_system = {"cstdint", "utility",
                                                "vector"};
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find("#include");
    if (pos == std::string::npos) continue;
    const auto quote_open = line.find('"', pos);
    if (quote_open != std::string::npos) {
      const auto quote_close = line.find('"', quote_open + 1);
      const std::string header =
          line.substr(quote_open + 1, quote_close - quote_open - 1);
      CHECK_MESSAGE(allowed_project.count(header) == 1,
                    "unexpected project include: ", header);
    } else {
      const auto open = line.find('<', pos);
      const auto close = line.find('>', open + 1);
      REQUIRE(open != std::string::npos);
      const std::string header = line.substr(open + 1, close - open - 1);
      CHECK_MESSAGE(allowed_system.count(header) == 1,
                    "unexpected system include: ", header);
    }
  }
}
