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

#ifndef FEDPDD_PRIVACY_HPP
#define FEDPDD_PRIVACY_HPP

#include <iosfwd>
#include <vector>

#include "fedpdd/rng.hpp"
#include "fedpdd/types.hpp"

namespace fedpdd {

/// Per-release privacy demand for one Gaussian output perturbation.
struct PrivacySpec {
  double epsilon = 1.0;
  double delta = 1e-5;
  double sensitivity = 1.0;  // global l2 sensitivity of the released function
};

/// Gaussian noise scale satisfying the analytic-mechanism condition
///   Phi(D/2s - es/D) - e^e * Phi(-D/2s - es/D) <= delta
/// for the attached spec.
struct NoiseCalibration {
  double sigma = 0.0;
  PrivacySpec spec;

  /// Noiseless calibration; used for tests and noise-disabled runs.
  static NoiseCalibration none() { return NoiseCalibration{}; }
};

/// Left-hand side of the analytic Gaussian mechanism condition.
double gaussian_mechanism_delta(double epsilon, double sensitivity,
                                double sigma);

/// Classical Gaussian calibration sensitivity*sqrt(2*ln(1.25/delta))/epsilon.
double classical_gaussian_sigma(const PrivacySpec& spec);

/// Minimal sigma (to relative tolerance 1e-9) satisfying the analytic
/// mechanism condition, found by bisection around the classical bound.
/// Requires epsilon > 0 and delta strictly inside (0, 1).
NoiseCalibration calibrate(const PrivacySpec& spec);

/// Adds independent N(0, sigma^2) noise to every logit component.
LogitVector perturb(const LogitVector& z, const NoiseCalibration& calibration,
                    Rng& rng);

/// Sequential-composition accountant: total budget is the sum of the
/// per-release (epsilon, delta) over all recorded releases.
class BudgetLedger {
 public:
  struct Entry {
    Party party;
    int round;
    long samples;  // number of single-sample releases in this batch
    double epsilon;
    double delta;
  };

  void record_release(Party party, int round, long samples,
                      const PrivacySpec& spec);

  double epsilon_total(Party party) const;
  double delta_total(Party party) const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Per-party totals followed by one line per entry.
  void write_report(std::ostream& os) const;

 private:
  std::vector<Entry> entries_;
  double eps_total_[2] = {0.0, 0.0};
  double delta_total_[2] = {0.0, 0.0};
};

}  // namespace fedpdd

#endif  // FEDPDD_PRIVACY_HPP
