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

#ifndef FEDPDD_TYPES_HPP
#define FEDPDD_TYPES_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedpdd {

using SampleId = std::uint64_t;

enum class Party : int { A = 0, B = 1 };

inline const char* party_name(Party p) { return p == Party::A ? "A" : "B"; }

/// Raw m-class score vector emitted by a local model.
struct LogitVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double l2_norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  /// Rescales to l2 norm `cap` when the norm exceeds it.
  LogitVector clipped(double cap) const {
    LogitVector out = *this;
    const double n = l2_norm();
    if (n > cap) {
      const double scale = cap / n;
      for (double& v : out.values) v *= scale;
    }
    return out;
  }
};

/// Error in a user-supplied configuration (schema, experiment config, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Error while parsing an input file; message names the offending row.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Violation of a protocol precondition (e.g. no overlapped samples).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite value where a finite one is required (e.g. exploding gradient).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedpdd

#endif  // FEDPDD_TYPES_HPP
