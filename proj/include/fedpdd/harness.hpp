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

#ifndef FEDPDD_HARNESS_HPP
#define FEDPDD_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedpdd/dataset.hpp"
#include "fedpdd/protocol.hpp"
#include "fedpdd/types.hpp"

namespace fedpdd {

enum class SweepAxis { None, Alpha, Temperature, Epsilon };

const char* sweep_axis_name(SweepAxis axis);
SweepAxis sweep_axis_from_name(const std::string& name);  // throws ConfigError

/// Where the samples come from: exactly one of the two alternatives.
struct DatasetSource {
  std::optional<SyntheticSpec> synthetic;
  struct CsvSource {
    std::string data_path;
    std::string schema_path;
  };
  std::optional<CsvSource> csv;
};

/// Top-level experiment description, loadable from a JSON config file.
/// The per-party model configs inside `protocol` are templates: field
/// counts and vocabularies are resolved from the dataset layout per run.
struct ExperimentConfig {
  DatasetSource source;
  double alpha = 0.1;  // overlapped ratio at the base point
  SplitSpec split;
  ProtocolConfig protocol;
  std::vector<std::uint64_t> seeds = {1};

  SweepAxis axis = SweepAxis::None;
  std::vector<double> alpha_sweep;
  std::vector<double> temperature_sweep;
  std::vector<double> epsilon_sweep;

  /// When true, protocol.privacy->epsilon/delta are TOTAL budgets, divided
  /// equally over the (rounds+1)*|D^c| planned releases before calibration.
  bool total_budget = false;

  std::string output_dir = "out";

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  /// Canonical JSON of the fully resolved config (the run manifest body).
  std::string to_json() const;

  void validate() const;  // throws ConfigError
};

/// Accuracy triple on the aligned test set.
struct EvalRow {
  double local_a = 0.0;
  double local_b = 0.0;
  double joint = 0.0;
};

/// One completed (sweep value, seed, variant) execution.
struct RunMetrics {
  double sweep_value = 0.0;  // the base alpha when no axis is swept
  std::uint64_t seed = 0;
  bool federated = true;  // false = isolated local baseline
  EvalRow accuracy;
  RoundLedger rounds;
  BudgetLedger budget;
};

/// Per-sweep-value aggregate over seeds (mean and sample spread).
struct AggregateRow {
  double sweep_value = 0.0;
  bool federated = true;
  EvalRow mean;
  EvalRow spread;
  int runs = 0;
};

struct MetricsReport {
  SweepAxis axis = SweepAxis::None;
  std::vector<RunMetrics> runs;
  std::vector<AggregateRow> aggregates;
};

/// Runs every (sweep value, seed) combination — the federated protocol and,
/// when `include_federated` allows, the isolated baseline for comparison —
/// and writes runs.csv, summary.csv, per-run round CSVs, plot CSVs and the
/// manifest under cfg.output_dir. Pass include_federated=false to execute
/// baselines only.
MetricsReport run_experiment(const ExperimentConfig& cfg,
                             bool include_federated = true);

/// Local accuracies use each party's own features only; the joint column
/// averages both parties' class probabilities with weight `w`. Throws
/// ConfigError on an empty test view.
EvalRow evaluate(const LocalModel& best_a, const LocalModel& best_b,
                 const VerticalDataset& test, double w);

/// Writes the tidy plot CSVs for the report: accuracy_vs_round.csv always,
/// plus accuracy_vs_<axis>.csv when a sweep axis is present. Files for
/// absent axes are not created.
void emit_plots_data(const MetricsReport& report, const std::string& out_dir);

}  // namespace fedpdd

#endif  // FEDPDD_HARNESS_HPP
