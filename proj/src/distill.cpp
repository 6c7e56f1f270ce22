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

#include "fedpdd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedpdd {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> stable_softmax(const std::vector<double>& scaled) {
  const double mx = *std::max_element(scaled.begin(), scaled.end());
  std::vector<double> out(scaled.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    out[i] = std::exp(scaled[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

SoftTarget soft_target(const LogitVector& z, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::domain_error("soft_target: temperature must be positive");
  }
  if (z.values.empty()) {
    throw std::domain_error("soft_target: empty logit vector");
  }
  std::vector<double> scaled(z.values.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i] = z.values[i] / temperature;
  }
  return SoftTarget{stable_softmax(scaled)};
}

double kd_loss(const SoftTarget& p_student, const SoftTarget& q_teacher,
               double temperature, bool reverse) {
  if (p_student.size() != q_teacher.size()) {
    throw std::invalid_argument("kd_loss: dimension mismatch");
  }
  const SoftTarget& p = reverse ? q_teacher : p_student;
  const SoftTarget& q = reverse ? p_student : q_teacher;
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;  // 0 * log 0 = 0
    const double qi = std::max(q[i], kProbFloor);
    const double pi = std::max(p[i], kProbFloor);
    kl += p[i] * (std::log(pi) - std::log(qi));
  }
  return temperature * temperature * kl;
}

double ce_loss(const LogitVector& z, int label) {
  const auto m = z.values.size();
  if (label < 0 || static_cast<std::size_t>(label) >= m) {
    throw std::domain_error("ce_loss: label out of range");
  }
  const double mx = *std::max_element(z.values.begin(), z.values.end());
  double lse = 0.0;
  for (double v : z.values) lse += std::exp(v - mx);
  return std::log(lse) + mx - z.values[label];
}

namespace {

// Adds the gradient of T^2*KL between softened student p = softmax(z/T) and
// a fixed teacher q. Forward direction per component j:
//   d/dz_j = T * p_j * ((log p_j - log q_j) - KL(p||q))
// Reversed (teacher-first) direction: d/dz_j = T * (p_j - q_j).
double accumulate_kd(const LogitVector& z, const SoftTarget& teacher, double t,
                     double weight, bool reverse, std::vector<double>& grad) {
  const SoftTarget p = soft_target(z, t);
  const double loss = kd_loss(p, teacher, t, reverse);
  if (reverse) {
    for (std::size_t j = 0; j < grad.size(); ++j) {
      grad[j] += weight * t * (p[j] - teacher[j]);
    }
  } else {
    const double kl = loss / (t * t);
    for (std::size_t j = 0; j < grad.size(); ++j) {
      const double pj = std::max(p[j], kProbFloor);
      const double qj = std::max(teacher[j], kProbFloor);
      grad[j] += weight * t * p[j] * ((std::log(pj) - std::log(qj)) - kl);
    }
  }
  return loss;
}

}  // namespace

LossBreakdown combined_loss(const LogitVector& z, int label,
                            const std::optional<SoftTarget>& teacher_ensemble,
                            const std::optional<SoftTarget>& teacher_self,
                            const DistillConfig& cfg) {
  LossBreakdown out;
  out.grad.assign(z.values.size(), 0.0);

  if (teacher_self.has_value()) {
    out.sd = accumulate_kd(z, *teacher_self, cfg.t_sd, /*weight=*/1.0,
                           cfg.reverse_kl, out.grad);
  }
  if (teacher_ensemble.has_value()) {
    out.kd = accumulate_kd(z, *teacher_ensemble, cfg.t_ed, cfg.beta,
                           cfg.reverse_kl, out.grad);
  }
  out.ce = ce_loss(z, label);

  const SoftTarget p1 = soft_target(z, 1.0);
  for (std::size_t j = 0; j < out.grad.size(); ++j) {
    const double onehot = (static_cast<int>(j) == label) ? 1.0 : 0.0;
    out.grad[j] += cfg.gamma * (p1[j] - onehot);
  }

  out.total = out.sd + cfg.beta * out.kd + cfg.gamma * out.ce;
  return out;
}

}  // namespace fedpdd
