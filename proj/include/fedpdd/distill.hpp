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

#ifndef FEDPDD_DISTILL_HPP
#define FEDPDD_DISTILL_HPP

#include <optional>
#include <vector>

#include "fedpdd/types.hpp"

namespace fedpdd {

/// Temperature-softened class distribution; components sum to 1.
struct SoftTarget {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

struct DistillConfig {
  double t_sd = 1.0;   // self-distillation temperature
  double t_ed = 1.0;   // ensemble-distillation temperature
  double beta = 0.0;   // ensemble-distillation weight
  double gamma = 1.0;  // cross-entropy weight
  // Distillation KL is taken student-first; set for the reversed
  // (teacher-first) direction as an ablation knob.
  bool reverse_kl = false;
};

/// Temperature-scaled softmax softmax(z/T), evaluated stably.
SoftTarget soft_target(const LogitVector& z, double temperature);

/// T^2-scaled KL divergence between softened distributions.
/// Direction is KL(p_student || q_teacher); teacher components are floored
/// at 1e-12 before the log. `reverse` swaps the roles of the two arguments.
double kd_loss(const SoftTarget& p_student, const SoftTarget& q_teacher,
               double temperature, bool reverse = false);

/// Standard-softmax cross entropy -log softmax(z)[label].
double ce_loss(const LogitVector& z, int label);

struct LossBreakdown {
  double total = 0.0;
  double sd = 0.0;  // self-distillation term, unweighted
  double kd = 0.0;  // ensemble-distillation term, unweighted
  double ce = 0.0;  // cross-entropy term, unweighted
  std::vector<double> grad;  // d total / d z
};

/// Training objective: L = L_SD + beta * L_KD + gamma * L_CE, with the exact
/// analytic gradient in z. An absent teacher contributes zero to both the
/// loss and the gradient; teachers are constants (no gradient flows to them).
LossBreakdown combined_loss(const LogitVector& z, int label,
                            const std::optional<SoftTarget>& teacher_ensemble,
                            const std::optional<SoftTarget>& teacher_self,
                            const DistillConfig& cfg);

}  // namespace fedpdd

#endif  // FEDPDD_DISTILL_HPP
