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

#ifndef FEDPDD_SERVER_HPP
#define FEDPDD_SERVER_HPP

// Data minimization: the server's entire interface is (sample id, perturbed
// logit) pairs in and (sample id, soft target) pairs out. No feature, label
// or model type is reachable from this header, and that property is enforced
// by an include-audit test.

#include <cstdint>
#include <utility>
#include <vector>

#include "fedpdd/distill.hpp"
#include "fedpdd/types.hpp"

namespace fedpdd {

/// One party's per-sample upload: the perturbed, clipped logit vector.
struct PerturbedUpload {
  SampleId sample = 0;
  LogitVector logits;
};

/// Central aggregator. Buffers both parties' uploads for one synchronization
/// barrier, combines them as a weighted logit average, and emits the
/// temperature-softened ensemble teacher for every uploaded sample.
///
/// Communication counters: `units` counts uploaded logit components only
/// (2*m per sample per aggregation), so after n aggregations over |D^c|
/// samples it equals 2*m*n*|D^c|. Messages are counted separately: each
/// aggregation exchanges 2 uploads and 2 downloads per sample.
class EnsembleServer {
 public:
  /// `weight` is the party-A coefficient w of the logit average;
  /// `temperature` is the softmax temperature applied to the ensemble.
  EnsembleServer(double weight, double temperature);

  /// Combines aligned upload lists (same samples, ascending id order) into
  /// per-sample soft targets z = w*z_a + (1-w)*z_b. Throws ProtocolError
  /// when the lists are empty, misaligned, or dimensioned inconsistently.
  std::vector<std::pair<SampleId, SoftTarget>> aggregate(
      const std::vector<PerturbedUpload>& from_a,
      const std::vector<PerturbedUpload>& from_b);

  double weight() const { return weight_; }
  double temperature() const { return temperature_; }

  std::uint64_t messages_up() const { return messages_up_; }
  std::uint64_t messages_down() const { return messages_down_; }
  std::uint64_t units() const { return units_; }
  int rounds_completed() const { return rounds_completed_; }

 private:
  double weight_;
  double temperature_;
  std::uint64_t messages_up_ = 0;
  std::uint64_t messages_down_ = 0;
  std::uint64_t units_ = 0;
  int rounds_completed_ = 0;
};

}  // namespace fedpdd

#endif  // FEDPDD_SERVER_HPP
