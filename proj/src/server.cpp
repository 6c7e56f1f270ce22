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

#include "fedpdd/server.hpp"

#include <string>

namespace fedpdd {

EnsembleServer::EnsembleServer(double weight, double temperature)
    : weight_(weight), temperature_(temperature) {
  if (weight < 0.0 || weight > 1.0) {
    throw ConfigError("server: ensemble weight must lie in [0, 1]");
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("server: temperature must be positive");
  }
}

std::vector<std::pair<SampleId, SoftTarget>> EnsembleServer::aggregate(
    const std::vector<PerturbedUpload>& from_a,
    const std::vector<PerturbedUpload>& from_b) {
  if (from_a.empty() || from_b.empty()) {
    throw ProtocolError("server: no knowledge-transfer channel (empty upload)");
  }
  if (from_a.size() != from_b.size()) {
    throw ProtocolError("server: parties uploaded different sample counts");
  }

  std::vector<std::pair<SampleId, SoftTarget>> teachers;
  teachers.reserve(from_a.size());
  for (std::size_t i = 0; i < from_a.size(); ++i) {
    const PerturbedUpload& ua = from_a[i];
    const PerturbedUpload& ub = from_b[i];
    if (ua.sample != ub.sample) {
      throw ProtocolError("server: misaligned uploads at position " +
                          std::to_string(i));
    }
    if (ua.logits.size() != ub.logits.size() || ua.logits.size() == 0) {
      throw ProtocolError("server: inconsistent logit dimensions for sample " +
                          std::to_string(ua.sample));
    }
    LogitVector combined;
    combined.values.resize(ua.logits.size());
    for (std::size_t j = 0; j < combined.size(); ++j) {
      combined[j] = weight_ * ua.logits[j] + (1.0 - weight_) * ub.logits[j];
    }
    teachers.emplace_back(ua.sample, soft_target(combined, temperature_));
  }

  const auto n = static_cast<std::uint64_t>(from_a.size());
  const auto m = static_cast<std::uint64_t>(from_a.front().logits.size());
  messages_up_ += 2 * n;
  messages_down_ += 2 * n;
  units_ += 2 * n * m;
  ++rounds_completed_;
  return teachers;
}

}  // namespace fedpdd
