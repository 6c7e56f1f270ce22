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

#include "fedpdd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fedpdd {

namespace fs = std::filesystem;
using nlohmann::json;

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Alpha:
      return "alpha";
    case SweepAxis::Temperature:
      return "temperature";
    case SweepAxis::Epsilon:
      return "epsilon";
    case SweepAxis::None:
      break;
  }
  return "none";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "alpha") return SweepAxis::Alpha;
  if (name == "temperature") return SweepAxis::Temperature;
  if (name == "epsilon") return SweepAxis::Epsilon;
  if (name == "none") return SweepAxis::None;
  throw ConfigError("config: unknown sweep axis '" + name + "'");
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

/// Rejects unknown keys so config typos fail loudly instead of silently
/// falling back to defaults.
void check_keys(const json& j, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ConfigError("config: " + context + " must be an object");
  }
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end()) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " +
                        context);
    }
  }
}

SyntheticSpec parse_synthetic(const json& j) {
  check_keys(j, "dataset.synthetic",
             {"samples", "fields_per_party", "vocab_size", "bucket_noise",
              "signal_strength", "label_noise", "idiosyncratic_weight"});
  SyntheticSpec spec;
  spec.samples = j.value("samples", spec.samples);
  spec.fields_per_party = j.value("fields_per_party", spec.fields_per_party);
  spec.vocab_size = j.value("vocab_size", spec.vocab_size);
  spec.bucket_noise = j.value("bucket_noise", spec.bucket_noise);
  spec.signal_strength = j.value("signal_strength", spec.signal_strength);
  spec.label_noise = j.value("label_noise", spec.label_noise);
  spec.idiosyncratic_weight =
      j.value("idiosyncratic_weight", spec.idiosyncratic_weight);
  return spec;
}

ModelConfig parse_model(const json& j, const ModelConfig& base) {
  check_keys(j, "protocol.model",
             {"embedding_dim", "hidden_widths", "output_classes",
              "logit_clip"});
  ModelConfig m = base;
  m.embedding_dim = j.value("embedding_dim", m.embedding_dim);
  if (j.contains("hidden_widths")) {
    m.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  }
  m.output_classes = j.value("output_classes", m.output_classes);
  m.logit_clip = j.value("logit_clip", m.logit_clip);
  return m;
}

ProtocolConfig parse_protocol(const json& j) {
  check_keys(j, "protocol",
             {"rounds", "local_epochs", "local_patience", "pretrain_epochs",
              "pretrain_patience", "batch_size", "ensemble_weight", "distill",
              "optimizer", "model", "model_a", "model_b", "privacy",
              "enable_self_distillation", "enable_federation"});
  ProtocolConfig p;
  p.rounds = j.value("rounds", p.rounds);
  p.local_epochs = j.value("local_epochs", p.local_epochs);
  p.local_patience = j.value("local_patience", p.local_patience);
  p.pretrain_epochs = j.value("pretrain_epochs", p.pretrain_epochs);
  p.pretrain_patience = j.value("pretrain_patience", p.pretrain_patience);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.ensemble_weight = j.value("ensemble_weight", p.ensemble_weight);
  p.enable_self_distillation =
      j.value("enable_self_distillation", p.enable_self_distillation);
  p.enable_federation = j.value("enable_federation", p.enable_federation);

  if (j.contains("distill")) {
    const json& d = j.at("distill");
    check_keys(d, "protocol.distill",
               {"t_sd", "t_ed", "beta", "gamma", "reverse_kl"});
    p.distill.t_sd = d.value("t_sd", p.distill.t_sd);
    p.distill.t_ed = d.value("t_ed", p.distill.t_ed);
    p.distill.beta = d.value("beta", p.distill.beta);
    p.distill.gamma = d.value("gamma", p.distill.gamma);
    p.distill.reverse_kl = d.value("reverse_kl", p.distill.reverse_kl);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, "protocol.optimizer",
               {"learning_rate", "weight_decay", "beta1", "beta2",
                "eps_stability"});
    p.optimizer.learning_rate =
        o.value("learning_rate", p.optimizer.learning_rate);
    p.optimizer.weight_decay =
        o.value("weight_decay", p.optimizer.weight_decay);
    p.optimizer.beta1 = o.value("beta1", p.optimizer.beta1);
    p.optimizer.beta2 = o.value("beta2", p.optimizer.beta2);
    p.optimizer.eps_stability =
        o.value("eps_stability", p.optimizer.eps_stability);
  }

  ModelConfig shared;  // template; field shapes resolved per run
  if (j.contains("model")) shared = parse_model(j.at("model"), shared);
  p.model_a = j.contains("model_a") ? parse_model(j.at("model_a"), shared)
                                    : shared;
  p.model_b = j.contains("model_b") ? parse_model(j.at("model_b"), shared)
                                    : shared;

  if (j.contains("privacy") && !j.at("privacy").is_null()) {
    const json& pr = j.at("privacy");
    check_keys(pr, "protocol.privacy", {"epsilon", "delta"});
    PrivacySpec spec;
    spec.epsilon = pr.value("epsilon", spec.epsilon);
    spec.delta = pr.value("delta", spec.delta);
    spec.sensitivity =
        2.0 * std::max(p.model_a.logit_clip, p.model_b.logit_clip);
    p.privacy = spec;
  }
  return p;
}

ExperimentConfig parse_config_json(const json& j) {
  check_keys(j, "config",
             {"dataset", "alpha", "split", "protocol", "seeds", "axis",
              "sweeps", "total_budget", "output_dir"});

  ExperimentConfig cfg;
  const json& ds = j.at("dataset");
  check_keys(ds, "dataset", {"synthetic", "csv"});
  if (ds.contains("synthetic") == ds.contains("csv")) {
    throw ConfigError(
        "config: dataset must provide exactly one of 'synthetic' or 'csv'");
  }
  if (ds.contains("synthetic")) {
    cfg.source.synthetic = parse_synthetic(ds.at("synthetic"));
  } else {
    const json& c = ds.at("csv");
    check_keys(c, "dataset.csv", {"data", "schema"});
    DatasetSource::CsvSource csv;
    csv.data_path = c.at("data").get<std::string>();
    csv.schema_path = c.at("schema").get<std::string>();
    cfg.source.csv = csv;
  }

  cfg.alpha = j.value("alpha", cfg.alpha);
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, "split", {"train_fraction", "validation_fraction"});
    cfg.split.train_fraction =
        s.value("train_fraction", cfg.split.train_fraction);
    cfg.split.validation_fraction =
        s.value("validation_fraction", cfg.split.validation_fraction);
  }
  if (j.contains("protocol")) cfg.protocol = parse_protocol(j.at("protocol"));
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (j.contains("axis")) {
    cfg.axis = sweep_axis_from_name(j.at("axis").get<std::string>());
  }
  if (j.contains("sweeps")) {
    const json& s = j.at("sweeps");
    check_keys(s, "sweeps", {"alpha", "temperature", "epsilon"});
    if (s.contains("alpha")) {
      cfg.alpha_sweep = s.at("alpha").get<std::vector<double>>();
    }
    if (s.contains("temperature")) {
      cfg.temperature_sweep = s.at("temperature").get<std::vector<double>>();
    }
    if (s.contains("epsilon")) {
      cfg.epsilon_sweep = s.at("epsilon").get<std::vector<double>>();
    }
  }
  cfg.total_budget = j.value("total_budget", cfg.total_budget);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  return cfg;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  // Structural JSON problems (bad syntax, missing keys, wrong value types)
  // all surface as ConfigError; semantic checks live in validate().
  try {
    return parse_config_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
}

std::string ExperimentConfig::to_json() const {
  json j;
  if (source.synthetic) {
    const SyntheticSpec& s = *source.synthetic;
    j["dataset"]["synthetic"] = {
        {"samples", s.samples},
        {"fields_per_party", s.fields_per_party},
        {"vocab_size", s.vocab_size},
        {"bucket_noise", s.bucket_noise},
        {"signal_strength", s.signal_strength},
        {"label_noise", s.label_noise},
        {"idiosyncratic_weight", s.idiosyncratic_weight}};
  } else if (source.csv) {
    j["dataset"]["csv"] = {{"data", source.csv->data_path},
                           {"schema", source.csv->schema_path}};
  }
  j["alpha"] = alpha;
  j["split"] = {{"train_fraction", split.train_fraction},
                {"validation_fraction", split.validation_fraction}};

  const auto model_json = [](const ModelConfig& m) {
    return json{{"embedding_dim", m.embedding_dim},
                {"hidden_widths", m.hidden_widths},
                {"output_classes", m.output_classes},
                {"logit_clip", m.logit_clip}};
  };
  json p;
  p["rounds"] = protocol.rounds;
  p["local_epochs"] = protocol.local_epochs;
  p["local_patience"] = protocol.local_patience;
  p["pretrain_epochs"] = protocol.pretrain_epochs;
  p["pretrain_patience"] = protocol.pretrain_patience;
  p["batch_size"] = protocol.batch_size;
  p["ensemble_weight"] = protocol.ensemble_weight;
  p["distill"] = {{"t_sd", protocol.distill.t_sd},
                  {"t_ed", protocol.distill.t_ed},
                  {"beta", protocol.distill.beta},
                  {"gamma", protocol.distill.gamma},
                  {"reverse_kl", protocol.distill.reverse_kl}};
  p["optimizer"] = {{"learning_rate", protocol.optimizer.learning_rate},
                    {"weight_decay", protocol.optimizer.weight_decay},
                    {"beta1", protocol.optimizer.beta1},
                    {"beta2", protocol.optimizer.beta2},
                    {"eps_stability", protocol.optimizer.eps_stability}};
  p["model_a"] = model_json(protocol.model_a);
  p["model_b"] = model_json(protocol.model_b);
  if (protocol.privacy) {
    p["privacy"] = {{"epsilon", protocol.privacy->epsilon},
                    {"delta", protocol.privacy->delta},
                    {"sensitivity", protocol.privacy->sensitivity}};
  }
  p["enable_self_distillation"] = protocol.enable_self_distillation;
  p["enable_federation"] = protocol.enable_federation;
  j["protocol"] = std::move(p);

  j["seeds"] = seeds;
  j["axis"] = sweep_axis_name(axis);
  j["sweeps"] = {{"alpha", alpha_sweep},
                 {"temperature", temperature_sweep},
                 {"epsilon", epsilon_sweep}};
  j["total_budget"] = total_budget;
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  if (!source.synthetic && !source.csv) {
    throw ConfigError("config: a dataset source is required");
  }
  if (source.synthetic) {
    const SyntheticSpec& s = *source.synthetic;
    if (s.samples <= 0 || s.fields_per_party <= 0 || s.vocab_size < 2) {
      throw ConfigError("config: invalid synthetic dataset spec");
    }
  }
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw ConfigError("config: alpha must lie in (0, 1]");
  }
  if (seeds.empty()) throw ConfigError("config: at least one seed required");
  if (output_dir.empty()) throw ConfigError("config: output_dir is empty");

  switch (axis) {
    case SweepAxis::Alpha:
      if (alpha_sweep.empty()) {
        throw ConfigError("config: alpha sweep requested but sweeps.alpha empty");
      }
      for (double a : alpha_sweep) {
        if (!(a > 0.0) || a > 1.0) {
          throw ConfigError("config: swept alpha values must lie in (0, 1]");
        }
      }
      break;
    case SweepAxis::Temperature:
      if (temperature_sweep.empty()) {
        throw ConfigError(
            "config: temperature sweep requested but sweeps.temperature empty");
      }
      for (double t : temperature_sweep) {
        if (!(t > 0.0)) {
          throw ConfigError("config: swept temperatures must be positive");
        }
      }
      break;
    case SweepAxis::Epsilon:
      if (epsilon_sweep.empty()) {
        throw ConfigError(
            "config: epsilon sweep requested but sweeps.epsilon empty");
      }
      if (!protocol.privacy) {
        throw ConfigError(
            "config: epsilon sweep requires a protocol.privacy block");
      }
      for (double e : epsilon_sweep) {
        if (!(e > 0.0)) {
          throw ConfigError("config: swept epsilons must be positive");
        }
      }
      break;
    case SweepAxis::None:
      break;
  }
}

// ---------------------------------------------------------------------------
// Evaluation

EvalRow evaluate(const LocalModel& best_a, const LocalModel& best_b,
                 const VerticalDataset& test, double w) {
  if (test.empty()) throw ConfigError("evaluate: empty test view");
  EvalRow row;
  row.local_a = local_accuracy(best_a, Party::A, test);
  row.local_b = local_accuracy(best_b, Party::B, test);

  std::vector<SampleId> aligned;
  {
    const auto& a = test.members(Party::A);
    const auto& b = test.members(Party::B);
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(aligned));
  }
  if (!aligned.empty()) {
    std::size_t correct = 0;
    for (SampleId id : aligned) {
      if (predict(best_a, best_b, test, id, w).label == test.label(id)) {
        ++correct;
      }
    }
    row.joint = static_cast<double>(correct) /
                static_cast<double>(aligned.size());
  }
  return row;
}

// ---------------------------------------------------------------------------
// Output writers

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

const char* variant_name(bool federated) {
  return federated ? "fedpdd" : "baseline";
}

void open_out(std::ofstream& out, const fs::path& path) {
  out.open(path);
  if (!out) {
    throw ConfigError("harness: cannot write " + path.string());
  }
}

/// Per-round CSV for one run: one row per (round, party) with the losses,
/// validation accuracy and cumulative communication / privacy spend.
void write_rounds_csv(const fs::path& path, const RunMetrics& run) {
  std::ofstream out;
  open_out(out, path);
  out << "round,party,val_accuracy,mean_ce,mean_sd,mean_kd,"
         "cumulative_units,cumulative_epsilon\n";
  std::uint64_t units = 0;
  for (const RoundRecord& rec : run.rounds.rounds) {
    units += rec.units;
    for (int p = 0; p < 2; ++p) {
      const Party party = static_cast<Party>(p);
      double eps = 0.0;
      for (const BudgetLedger::Entry& e : run.budget.entries()) {
        if (e.party == party && e.round <= rec.round) {
          eps += static_cast<double>(e.samples) * e.epsilon;
        }
      }
      out << rec.round << ',' << party_name(party) << ','
          << fmt(rec.party[p].validation_accuracy) << ','
          << fmt(rec.party[p].mean_ce) << ',' << fmt(rec.party[p].mean_sd)
          << ',' << fmt(rec.party[p].mean_kd) << ',' << units << ','
          << fmt(eps) << '\n';
    }
  }
}

void write_runs_csv(const fs::path& path, const MetricsReport& report) {
  std::ofstream out;
  open_out(out, path);
  out << "axis,value,seed,variant,local_a,local_b,joint\n";
  for (const RunMetrics& run : report.runs) {
    out << sweep_axis_name(report.axis) << ',' << fmt(run.sweep_value) << ','
        << run.seed << ',' << variant_name(run.federated) << ','
        << fmt(run.accuracy.local_a) << ',' << fmt(run.accuracy.local_b)
        << ',' << fmt(run.accuracy.joint) << '\n';
  }
}

void write_summary_csv(const fs::path& path, const MetricsReport& report) {
  std::ofstream out;
  open_out(out, path);
  out << "axis,value,variant,runs,local_a_mean,local_a_spread,"
         "local_b_mean,local_b_spread,joint_mean,joint_spread\n";
  for (const AggregateRow& row : report.aggregates) {
    out << sweep_axis_name(report.axis) << ',' << fmt(row.sweep_value) << ','
        << variant_name(row.federated) << ',' << row.runs << ','
        << fmt(row.mean.local_a) << ',' << fmt(row.spread.local_a) << ','
        << fmt(row.mean.local_b) << ',' << fmt(row.spread.local_b) << ','
        << fmt(row.mean.joint) << ',' << fmt(row.spread.joint) << '\n';
  }
}

AggregateRow aggregate_rows(double value, bool federated,
                            const std::vector<const RunMetrics*>& runs) {
  AggregateRow row;
  row.sweep_value = value;
  row.federated = federated;
  row.runs = static_cast<int>(runs.size());
  const auto stat = [&runs](double EvalRow::*field, double& mean,
                            double& spread) {
    double sum = 0.0;
    for (const RunMetrics* r : runs) sum += r->accuracy.*field;
    mean = sum / static_cast<double>(runs.size());
    double ss = 0.0;
    for (const RunMetrics* r : runs) {
      const double d = r->accuracy.*field - mean;
      ss += d * d;
    }
    spread = runs.size() > 1
                 ? std::sqrt(ss / static_cast<double>(runs.size() - 1))
                 : 0.0;
  };
  stat(&EvalRow::local_a, row.mean.local_a, row.spread.local_a);
  stat(&EvalRow::local_b, row.mean.local_b, row.spread.local_b);
  stat(&EvalRow::joint, row.mean.joint, row.spread.joint);
  return row;
}

}  // namespace

void emit_plots_data(const MetricsReport& report, const std::string& out_dir) {
  const fs::path dir(out_dir);

  {
    std::ofstream out;
    open_out(out, dir / "accuracy_vs_round.csv");
    out << "value,seed,variant,round,party,val_accuracy\n";
    for (const RunMetrics& run : report.runs) {
      for (const RoundRecord& rec : run.rounds.rounds) {
        if (rec.round < 1) continue;  // pretraining row is not a round
        for (int p = 0; p < 2; ++p) {
          out << fmt(run.sweep_value) << ',' << run.seed << ','
              << variant_name(run.federated) << ',' << rec.round << ','
              << party_name(static_cast<Party>(p)) << ','
              << fmt(rec.party[p].validation_accuracy) << '\n';
        }
      }
    }
  }

  if (report.axis == SweepAxis::Alpha) {
    // Joint accuracy of the federated run against the isolated baseline,
    // one row per swept ratio.
    std::vector<std::string> lines;
    for (const AggregateRow& row : report.aggregates) {
      if (!row.federated) continue;
      const AggregateRow* base = nullptr;
      for (const AggregateRow& other : report.aggregates) {
        if (!other.federated && other.sweep_value == row.sweep_value) {
          base = &other;
        }
      }
      std::ostringstream line;
      line << fmt(row.sweep_value) << ',' << fmt(row.mean.joint) << ','
           << fmt(row.spread.joint) << ','
           << (base ? fmt(base->mean.joint) : "") << ','
           << (base ? fmt(base->spread.joint) : "");
      lines.push_back(line.str());
    }
    if (!lines.empty()) {
      std::ofstream out;
      open_out(out, dir / "accuracy_vs_alpha.csv");
      out << "alpha,fedpdd_joint_mean,fedpdd_joint_spread,"
             "baseline_joint_mean,baseline_joint_spread\n";
      for (const std::string& line : lines) out << line << '\n';
    }
  }

  if (report.axis == SweepAxis::Epsilon ||
      report.axis == SweepAxis::Temperature) {
    std::vector<std::string> lines;
    for (const AggregateRow& row : report.aggregates) {
      if (!row.federated) continue;
      std::ostringstream line;
      line << fmt(row.sweep_value) << ',' << fmt(row.mean.joint) << ','
           << fmt(row.spread.joint) << ',' << fmt(row.mean.local_a) << ','
           << fmt(row.spread.local_a) << ',' << fmt(row.mean.local_b) << ','
           << fmt(row.spread.local_b);
      lines.push_back(line.str());
    }
    if (!lines.empty()) {
      const char* name = report.axis == SweepAxis::Epsilon
                             ? "accuracy_vs_epsilon.csv"
                             : "accuracy_vs_temperature.csv";
      std::ofstream out;
      open_out(out, dir / name);
      out << sweep_axis_name(report.axis)
          << ",joint_mean,joint_spread,local_a_mean,local_a_spread,"
             "local_b_mean,local_b_spread\n";
      for (const std::string& line : lines) out << line << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Experiment orchestration

namespace {

ModelConfig resolve_model(const ModelConfig& tmpl, const FieldLayout& layout) {
  ModelConfig m = tmpl;
  m.field_count = layout.field_count();
  m.vocab_sizes = layout.vocab_sizes;
  return m;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg,
                             bool include_federated) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    throw ConfigError("harness: cannot create output directory " +
                      cfg.output_dir + ": " + ec.message());
  }

  // CSV records do not depend on the run seed; load them once.
  std::vector<FeatureRecord> csv_records;
  FieldLayout csv_layout;
  std::map<int, Party> csv_assignment;
  if (cfg.source.csv) {
    const Schema schema = Schema::from_json_file(cfg.source.csv->schema_path);
    csv_records = load_csv(cfg.source.csv->data_path, schema);
    csv_layout = schema.layout();
    csv_assignment = schema.assignment();
  }

  std::vector<double> points;
  switch (cfg.axis) {
    case SweepAxis::Alpha:
      points = cfg.alpha_sweep;
      break;
    case SweepAxis::Temperature:
      points = cfg.temperature_sweep;
      break;
    case SweepAxis::Epsilon:
      points = cfg.epsilon_sweep;
      break;
    case SweepAxis::None:
      points = {cfg.alpha};
      break;
  }

  MetricsReport report;
  report.axis = cfg.axis;

  for (double value : points) {
    for (std::uint64_t seed : cfg.seeds) {
      const double alpha = cfg.axis == SweepAxis::Alpha ? value : cfg.alpha;

      std::vector<FeatureRecord> records;
      FieldLayout layout;
      std::map<int, Party> assignment;
      if (cfg.source.synthetic) {
        records = synthesize(*cfg.source.synthetic, seed);
        layout = synthetic_layout(*cfg.source.synthetic);
        assignment = synthetic_assignment(*cfg.source.synthetic);
      } else {
        records = csv_records;
        layout = csv_layout;
        assignment = csv_assignment;
      }
      // Streams 0-4 belong to the protocol; 5 and 6 drive the two dataset
      // partitioning stages.
      const VerticalDataset data =
          vertical_split(records, assignment, alpha, split_seed(seed, 5),
                         layout);
      SplitSpec split = cfg.split;
      split.seed = split_seed(seed, 6);
      const DatasetViews views = train_val_test_split(data, split);

      ProtocolConfig pcfg = cfg.protocol;
      pcfg.seed = seed;
      pcfg.model_a = resolve_model(cfg.protocol.model_a,
                                   views.train.layout(Party::A));
      pcfg.model_b = resolve_model(cfg.protocol.model_b,
                                   views.train.layout(Party::B));
      if (cfg.axis == SweepAxis::Temperature) {
        pcfg.distill.t_sd = value;
        pcfg.distill.t_ed = value;
      }
      if (cfg.axis == SweepAxis::Epsilon) pcfg.privacy->epsilon = value;
      if (cfg.total_budget && pcfg.privacy) {
        const double releases =
            static_cast<double>(pcfg.rounds + 1) *
            static_cast<double>(views.train.overlapped().size());
        if (releases < 1.0) {
          throw ConfigError("harness: total budget mode with no releases");
        }
        pcfg.privacy->epsilon /= releases;
        pcfg.privacy->delta /= releases;
      }

      const auto execute = [&](bool federated) {
        ProtocolResult result = federated ? run(pcfg, views)
                                          : run_local_baseline(pcfg, views);
        RunMetrics metrics;
        metrics.sweep_value = value;
        metrics.seed = seed;
        metrics.federated = federated;
        metrics.accuracy =
            evaluate(LocalModel(result.best_a), LocalModel(result.best_b),
                     views.test, pcfg.ensemble_weight);
        metrics.rounds = std::move(result.rounds);
        metrics.budget = std::move(result.budget);

        std::ostringstream tag;
        tag << sweep_axis_name(cfg.axis) << '_' << fmt(value) << "_seed"
            << seed << '_' << variant_name(federated);
        const fs::path run_dir = fs::path(cfg.output_dir) / "runs" / tag.str();
        fs::create_directories(run_dir, ec);
        if (ec) {
          throw ConfigError("harness: cannot create " + run_dir.string());
        }
        write_rounds_csv(run_dir / "rounds.csv", metrics);
        if (!metrics.budget.entries().empty()) {
          std::ofstream out;
          open_out(out, run_dir / "budget.txt");
          metrics.budget.write_report(out);
        }
        report.runs.push_back(std::move(metrics));
      };

      if (include_federated) execute(true);
      execute(false);
    }

    const auto collect = [&](bool federated) {
      std::vector<const RunMetrics*> group;
      for (const RunMetrics& run : report.runs) {
        if (run.sweep_value == value && run.federated == federated) {
          group.push_back(&run);
        }
      }
      if (!group.empty()) {
        report.aggregates.push_back(aggregate_rows(value, federated, group));
      }
    };
    if (include_federated) collect(true);
    collect(false);
  }

  write_runs_csv(fs::path(cfg.output_dir) / "runs.csv", report);
  write_summary_csv(fs::path(cfg.output_dir) / "summary.csv", report);
  emit_plots_data(report, cfg.output_dir);
  {
    std::ofstream out;
    open_out(out, fs::path(cfg.output_dir) / "manifest.json");
    out << cfg.to_json();
  }
  return report;
}

}  // namespace fedpdd
