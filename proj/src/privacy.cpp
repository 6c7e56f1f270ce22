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

#include "fedpdd/privacy.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace fedpdd {

namespace {

// Standard normal CDF through erfc; keeps full relative accuracy in the
// deep lower tail, which the delta <= 1e-6 grid exercises.
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void validate(const PrivacySpec& spec) {
  if (!(spec.epsilon > 0.0)) {
    throw std::domain_error("calibrate: epsilon must be positive");
  }
  if (!(spec.delta > 0.0) || !(spec.delta < 1.0)) {
    throw std::domain_error("calibrate: delta must lie strictly in (0, 1)");
  }
  if (!(spec.sensitivity > 0.0)) {
    throw std::domain_error("calibrate: sensitivity must be positive");
  }
}

}  // namespace

double gaussian_mechanism_delta(double epsilon, double sensitivity,
                                double sigma) {
  const double a = sensitivity / (2.0 * sigma);
  const double b = epsilon * sigma / sensitivity;
  return norm_cdf(a - b) - std::exp(epsilon) * norm_cdf(-a - b);
}

double classical_gaussian_sigma(const PrivacySpec& spec) {
  return spec.sensitivity * std::sqrt(2.0 * std::log(1.25 / spec.delta)) /
         spec.epsilon;
}

NoiseCalibration calibrate(const PrivacySpec& spec) {
  validate(spec);
  const auto lhs = [&spec](double sigma) {
    return gaussian_mechanism_delta(spec.epsilon, spec.sensitivity, sigma);
  };

  // Bracket the boundary solution starting from the classical bound. The
  // condition's left-hand side decreases monotonically in sigma.
  const double sigma0 = classical_gaussian_sigma(spec);
  double hi = sigma0;
  while (lhs(hi) > spec.delta) {
    hi *= 2.0;
    if (hi > 1e6 * sigma0) {
      throw std::runtime_error("calibrate: failed to bracket sigma");
    }
  }
  double lo = hi / 2.0;
  while (lo > sigma0 / 100.0 && lhs(lo) <= spec.delta) {
    lo /= 2.0;
  }
  if (lhs(lo) <= spec.delta) {
    // Condition already met at the bottom of the search range.
    hi = lo;
  }

  while ((hi - lo) / hi > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (lhs(mid) <= spec.delta) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return NoiseCalibration{hi, spec};
}

LogitVector perturb(const LogitVector& z, const NoiseCalibration& calibration,
                    Rng& rng) {
  LogitVector out = z;
  if (calibration.sigma <= 0.0) return out;
  for (double& v : out.values) {
    v += rng.normal(0.0, calibration.sigma);
  }
  return out;
}

void BudgetLedger::record_release(Party party, int round, long samples,
                                  const PrivacySpec& spec) {
  if (samples < 1) {
    throw std::invalid_argument("record_release: samples must be >= 1");
  }
  entries_.push_back(Entry{party, round, samples, spec.epsilon, spec.delta});
  const int idx = static_cast<int>(party);
  eps_total_[idx] += static_cast<double>(samples) * spec.epsilon;
  delta_total_[idx] += static_cast<double>(samples) * spec.delta;
}

double BudgetLedger::epsilon_total(Party party) const {
  return eps_total_[static_cast<int>(party)];
}

double BudgetLedger::delta_total(Party party) const {
  return delta_total_[static_cast<int>(party)];
}

void BudgetLedger::write_report(std::ostream& os) const {
  os << "privacy budget (sequential composition)\n";
  for (Party p : {Party::A, Party::B}) {
    os << "  party " << party_name(p) << ": epsilon_total=" << epsilon_total(p)
       << " delta_total=" << delta_total(p) << "\n";
  }
  os << "  entries (party, round, samples, epsilon, delta):\n";
  for (const Entry& e : entries_) {
    os << "    " << party_name(e.party) << ", " << e.round << ", " << e.samples
       << ", " << e.epsilon << ", " << e.delta << "\n";
  }
}

}  // namespace fedpdd
