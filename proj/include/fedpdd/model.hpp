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

#ifndef FEDPDD_MODEL_HPP
#define FEDPDD_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpdd/dataset.hpp"
#include "fedpdd/types.hpp"

namespace fedpdd {

/// Architecture of one party's local recommender: a factorization-machine
/// scalar (first-order weights plus pairwise embedding interactions) added
/// to the positive-class output of a dense network over the concatenated
/// field embeddings.
struct ModelConfig {
  int embedding_dim = 8;
  std::vector<int> hidden_widths = {64, 32};
  int field_count = 0;
  std::vector<int> vocab_sizes;   // per field; 1 for numerical fields
  int output_classes = 2;         // m
  double logit_clip = 5.0;        // l2 cap C on released logits

  /// Configures the feature-dependent fields from a dataset layout.
  static ModelConfig for_layout(const FieldLayout& layout);

  void validate() const;  // throws ConfigError
};

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;  // decoupled, applied directly to parameters
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stability = 1e-8;
};

/// Immutable parameter-only copy used for best-model teacher tracking;
/// optimizer state is deliberately not captured.
struct ModelSnapshot {
  ModelConfig config;
  std::vector<double> params;
  int tag = -1;        // round index at capture
  double score = 0.0;  // validation accuracy at capture
};

class LocalModel {
 public:
  /// Named contiguous range of the flat parameter vector.
  struct ParamGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  LocalModel(ModelConfig config, std::uint64_t seed);
  explicit LocalModel(const ModelSnapshot& snapshot);

  const ModelConfig& config() const { return config_; }
  const std::vector<double>& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<ParamGroup>& groups() const { return groups_; }

  /// Mutable access for oracle-style tests that nudge single parameters.
  double& parameter(std::size_t index) { return params_[index]; }

  /// Raw logits (training path). Throws std::domain_error when the record
  /// references a field or category outside the configured shapes.
  LogitVector forward(const FeatureRecord& record) const;

  /// Release path: raw logits rescaled to l2 norm at most logit_clip.
  LogitVector forward_clipped(const FeatureRecord& record) const;

  /// Gradient of (1/|batch|) sum_i <grad_wrt_logits[i], z_i> with respect to
  /// every parameter, evaluated at the raw (unclipped) logits. The result
  /// aligns with `parameters()`.
  std::vector<double> backward(
      const std::vector<FeatureRecord>& batch,
      const std::vector<std::vector<double>>& grad_wrt_logits) const;

  /// One bias-corrected Adam update with decoupled weight decay. Throws
  /// NumericError naming the parameter group when a gradient is non-finite.
  void adam_step(const std::vector<double>& gradients,
                 const OptimizerConfig& opt);

  int step_count() const { return step_; }

  ModelSnapshot snapshot(int round, double score) const;

  /// Versioned binary checkpoint; parameter values round-trip bit-exactly.
  void save_checkpoint(const std::string& path) const;
  static LocalModel load_checkpoint(const std::string& path);

 private:
  struct Activations;
  void run_forward(const FeatureRecord& record, Activations& act) const;
  void check_record(const FeatureRecord& record) const;

  ModelConfig config_;
  std::vector<ParamGroup> groups_;
  std::vector<double> params_;
  std::vector<double> moment1_;
  std::vector<double> moment2_;
  int step_ = 0;

  // Cached offsets into params_ (resolved from groups_ at construction).
  std::vector<std::size_t> embedding_offset_;    // per field
  std::vector<std::size_t> first_order_offset_;  // per field
  std::vector<std::size_t> layer_w_offset_;      // per dense layer
  std::vector<std::size_t> layer_b_offset_;      // per dense layer
  std::vector<int> layer_in_;                    // per dense layer
  std::vector<int> layer_out_;                   // per dense layer
};

}  // namespace fedpdd

#endif  // FEDPDD_MODEL_HPP
