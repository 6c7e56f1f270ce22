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

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedpdd/rng.hpp"
#include "fedpdd/types.hpp"

namespace {

using fedpdd::BudgetLedger;
using fedpdd::LogitVector;
using fedpdd::NoiseCalibration;
using fedpdd::Party;
using fedpdd::PrivacySpec;
using fedpdd::Rng;

PrivacySpec spec(double eps, double delta, double sensitivity) {
  PrivacySpec s;
  s.epsilon = eps;
  s.delta = delta;
  s.sensitivity = sensitivity;
  return s;
}

const double kEpsGrid[] = {0.05, 0.1, 1.0, 5.0, 10.0};
const double kDeltaGrid[] = {1e-6, 1e-5};
const double kSensGrid[] = {1.0, 2.0, 10.0};

}  // namespace

TEST_CASE("calibrate: the returned sigma sits on the mechanism boundary") {
  for (double eps : kEpsGrid) {
    for (double delta : kDeltaGrid) {
      for (double sens : kSensGrid) {
        const NoiseCalibration c = fedpdd::calibrate(spec(eps, delta, sens));
        const double lhs = fedpdd::gaussian_mechanism_delta(eps, sens, c.sigma);
        CHECK(lhs <= delta);
        CHECK(std::abs(lhs - delta) <= 1e-9);
      }
    }
  }
}

TEST_CASE("calibrate: sigma is minimal to within a tenth of a percent") {
  for (double eps : kEpsGrid) {
    for (double delta : kDeltaGrid) {
      for (double sens : kSensGrid) {
        const NoiseCalibration c = fedpdd::calibrate(spec(eps, delta, sens));
        const double shrunk = c.sigma * 0.999;
        CHECK(fedpdd::gaussian_mechanism_delta(eps, sens, shrunk) > delta);
      }
    }
  }
}

TEST_CASE("calibrate: sigma scales linearly with the sensitivity") {
  for (double eps : kEpsGrid) {
    for (double delta : kDeltaGrid) {
      const double base = fedpdd::calibrate(spec(eps, delta, 1.0)).sigma;
      const double twice = fedpdd::calibrate(spec(eps, delta, 2.0)).sigma;
      const double tenfold = fedpdd::calibrate(spec(eps, delta, 10.0)).sigma;
      CHECK(twice == doctest::Approx(2.0 * base).epsilon(1e-9));
      CHECK(tenfold == doctest::Approx(10.0 * base).epsilon(1e-9));
    }
  }
}

TEST_CASE("calibrate: never exceeds the classical bound for epsilon <= 1") {
  for (double eps : {0.05, 0.1, 0.5, 1.0}) {
    for (double delta : kDeltaGrid) {
      for (double sens : kSensGrid) {
        const PrivacySpec s = spec(eps, delta, sens);
        CHECK(fedpdd::calibrate(s).sigma <=
              fedpdd::classical_gaussian_sigma(s) * (1.0 + 1e-9));
      }
    }
  }
}

TEST_CASE("calibrate: pinned reference point") {
  // Unit sensitivity, epsilon 1, delta 1e-5: the analytic condition is met
  // at sigma ~ 3.7306, well below the classical sqrt(2 ln(1.25/delta)).
  const NoiseCalibration c = fedpdd::calibrate(spec(1.0, 1e-5, 1.0));
  CHECK(c.sigma == doctest::Approx(3.7306316348).epsilon(1e-9));
  CHECK(fedpdd::classical_gaussian_sigma(spec(1.0, 1e-5, 1.0)) ==
        doctest::Approx(std::sqrt(2.0 * std::log(1.25e5))).epsilon(1e-12));
}

TEST_CASE("calibrate: sigma decreases as epsilon grows") {
  for (double delta : kDeltaGrid) {
    double prev = fedpdd::calibrate(spec(0.05, delta, 1.0)).sigma;
    for (double eps : {0.1, 0.5, 1.0, 5.0, 10.0}) {
      const double cur = fedpdd::calibrate(spec(eps, delta, 1.0)).sigma;
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("gaussian_mechanism_delta: decreasing in sigma") {
  const double loose = fedpdd::gaussian_mechanism_delta(1.0, 1.0, 1.0);
  const double tight = fedpdd::gaussian_mechanism_delta(1.0, 1.0, 5.0);
  CHECK(loose > tight);
  CHECK(tight > 0.0);
}

TEST_CASE("calibrate: rejects out-of-domain parameters") {
  CHECK_THROWS_AS(fedpdd::calibrate(spec(0.0, 1e-5, 1.0)), std::domain_error);
  CHECK_THROWS_AS(fedpdd::calibrate(spec(-1.0, 1e-5, 1.0)), std::domain_error);
  CHECK_THROWS_AS(fedpdd::calibrate(spec(1.0, 0.0, 1.0)), std::domain_error);
  CHECK_THROWS_AS(fedpdd::calibrate(spec(1.0, 1.0, 1.0)), std::domain_error);
  CHECK_THROWS_AS(fedpdd::calibrate(spec(1.0, 1e-5, 0.0)), std::domain_error);
}

TEST_CASE("perturb: the noiseless calibration is the identity") {
  Rng rng(3);
  const LogitVector z{{1.5, -2.5, 0.25}};
  const LogitVector out = fedpdd::perturb(z, NoiseCalibration::none(), rng);
  CHECK(out.values == z.values);
}

TEST_CASE("perturb: deterministic under a pinned generator state") {
  NoiseCalibration c;
  c.sigma = 2.0;
  const LogitVector z{{1.0, -1.0}};
  Rng r1(99);
  Rng r2(99);
  const LogitVector a = fedpdd::perturb(z, c, r1);
  const LogitVector b = fedpdd::perturb(z, c, r2);
  CHECK(a.values == b.values);
  CHECK(a.values != z.values);
}

TEST_CASE("perturb: empirical noise moments match the calibration") {
  NoiseCalibration c;
  c.sigma = 1.0;
  Rng rng(2024);
  const LogitVector zero{{0.0, 0.0, 0.0, 0.0}};
  const long trials = 250000;
  double sum = 0.0;
  double sumsq = 0.0;
  for (long i = 0; i < trials; ++i) {
    const LogitVector out = fedpdd::perturb(zero, c, rng);
    for (double v : out.values) {
      sum += v;
      sumsq += v * v;
    }
  }
  const double n = static_cast<double>(trials) * 4.0;
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.005);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("budget ledger: totals are sample-weighted sums per party") {
  BudgetLedger ledger;
  const PrivacySpec s = spec(1.0, 1e-5, 1.0);
  ledger.record_release(Party::A, 0, 1, s);
  ledger.record_release(Party::A, 1, 1, s);
  CHECK(ledger.epsilon_total(Party::A) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ledger.delta_total(Party::A) == doctest::Approx(2e-5).epsilon(1e-12));
  // The other party is untouched.
  CHECK(ledger.epsilon_total(Party::B) == 0.0);
  CHECK(ledger.delta_total(Party::B) == 0.0);
}

TEST_CASE("budget ledger: an empty ledger reports exactly zero") {
  const BudgetLedger ledger;
  CHECK(ledger.epsilon_total(Party::A) == 0.0);
  CHECK(ledger.epsilon_total(Party::B) == 0.0);
  CHECK(ledger.delta_total(Party::A) == 0.0);
  CHECK(ledger.entries().empty());
}

TEST_CASE("budget ledger: five rounds of hundred-sample releases") {
  BudgetLedger ledger;
  for (int round = 0; round < 5; ++round) {
    ledger.record_release(Party::B, round, 100, spec(0.01, 1e-7, 1.0));
  }
  CHECK(ledger.epsilon_total(Party::B) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(ledger.delta_total(Party::B) == doctest::Approx(5e-5).epsilon(1e-9));
  CHECK(ledger.entries().size() == 5);
}

TEST_CASE("budget ledger: totals equal a brute-force sum over the entries") {
  Rng rng(55);
  BudgetLedger ledger;
  for (int i = 0; i < 300; ++i) {
    const Party p = rng.bernoulli(0.5) ? Party::A : Party::B;
    const long samples = 1 + static_cast<long>(rng.uniform_index(1000));
    ledger.record_release(p, i, samples,
                          spec(rng.uniform(1e-4, 2.0), rng.uniform(1e-9, 1e-4),
                               1.0));
  }
  for (Party p : {Party::A, Party::B}) {
    double eps = 0.0;
    double delta = 0.0;
    for (const BudgetLedger::Entry& e : ledger.entries()) {
      if (e.party != p) continue;
      eps += static_cast<double>(e.samples) * e.epsilon;
      delta += static_cast<double>(e.samples) * e.delta;
    }
    // Same accumulation order, so the totals agree bit for bit.
    CHECK(ledger.epsilon_total(p) == eps);
    CHECK(ledger.delta_total(p) == delta);
  }
}

TEST_CASE("budget ledger: rejects releases without samples") {
  BudgetLedger ledger;
  CHECK_THROWS_AS(ledger.record_release(Party::A, 0, 0, spec(1, 1e-5, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ledger.record_release(Party::A, 0, -5, spec(1, 1e-5, 1)),
                  std::invalid_argument);
}

TEST_CASE("budget ledger: the report names both parties and the totals") {
  BudgetLedger ledger;
  ledger.record_release(Party::A, 2, 10, spec(0.5, 1e-6, 1.0));
  std::ostringstream os;
  ledger.write_report(os);
  const std::string text = os.str();
  CHECK(text.find("party A") != std::string::npos);
  CHECK(text.find("party B") != std::string::npos);
  CHECK(text.find("epsilon_total") != std::string::npos);
}
