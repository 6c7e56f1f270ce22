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

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fedpdd/harness.hpp"
#include "fedpdd/privacy.hpp"

namespace {

void print_report(const fedpdd::MetricsReport& report) {
  std::printf("%-12s %-10s %-9s %8s %8s %8s\n", "axis", "value", "variant",
              "local_a", "local_b", "joint");
  for (const fedpdd::AggregateRow& row : report.aggregates) {
    std::printf("%-12s %-10.6g %-9s %8.4f %8.4f %8.4f\n",
                fedpdd::sweep_axis_name(report.axis), row.sweep_value,
                row.federated ? "fedpdd" : "baseline", row.mean.local_a,
                row.mean.local_b, row.mean.joint);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedpdd-sim: two-party federated double-distillation simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::string axis_name;
  double epsilon = 1.0;
  double delta = 1e-5;
  double sensitivity = 1.0;

  CLI::App* cmd_run = app.add_subcommand(
      "run", "Run the protocol and the local baseline at the base point");
  cmd_run->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_run->add_option("--output", output_dir, "Override the output directory");

  CLI::App* cmd_sweep =
      app.add_subcommand("sweep", "Sweep one experiment axis");
  cmd_sweep->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_sweep
      ->add_option("--axis", axis_name, "Axis: alpha | temperature | epsilon")
      ->required()
      ->check(CLI::IsMember({"alpha", "temperature", "epsilon"}));
  cmd_sweep->add_option("--output", output_dir,
                        "Override the output directory");

  CLI::App* cmd_calibrate = app.add_subcommand(
      "calibrate", "Print the minimal gaussian sigma for one release");
  cmd_calibrate->add_option("--epsilon", epsilon, "Per-release epsilon")
      ->required();
  cmd_calibrate->add_option("--delta", delta, "Per-release delta")->required();
  cmd_calibrate->add_option("--sensitivity", sensitivity, "l2 sensitivity")
      ->required();

  CLI::App* cmd_baseline = app.add_subcommand(
      "baseline", "Run only the isolated local-training baseline");
  cmd_baseline->add_option("--config", config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_baseline->add_option("--output", output_dir,
                           "Override the output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_calibrate->parsed()) {
      fedpdd::PrivacySpec spec;
      spec.epsilon = epsilon;
      spec.delta = delta;
      spec.sensitivity = sensitivity;
      std::printf("%.12g\n", fedpdd::calibrate(spec).sigma);
      return 0;
    }

    fedpdd::ExperimentConfig cfg =
        fedpdd::ExperimentConfig::from_json_file(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (cmd_run->parsed() || cmd_baseline->parsed()) {
      cfg.axis = fedpdd::SweepAxis::None;
    } else {
      cfg.axis = fedpdd::sweep_axis_from_name(axis_name);
    }

    const fedpdd::MetricsReport report =
        fedpdd::run_experiment(cfg, !cmd_baseline->parsed());
    print_report(report);
    std::printf("outputs: %s\n", cfg.output_dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
