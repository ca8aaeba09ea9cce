// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace entrgi {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;   // worst observed error / deviation
  double limit = 0.0;   // the bound it is held to
  double elapsed_seconds = 0.0;
  std::string detail;
};

/// Analytic softmax Jacobian against central differences of every softmax
/// coordinate, over random (logits, tau) pairs with K in [2, 50] and tau in
/// [0.05, 2].
CheckResult check_softmax_jacobian_fd(int trials, std::uint64_t seed);

/// input_gradient of each reward backend against the finite-difference
/// oracle over the K x d x L grid {8,50} x {4,16} x {4,16}.
CheckResult check_reward_backends_fd(int trials_per_cell, std::uint64_t seed);

/// The full logit-gradient chain against finite differences of the
/// frozen-blend surrogate psi -> R(e_soft(psi) + c), randomizing vocabulary,
/// dimension, length, temperature, backend and schedule per configuration.
CheckResult check_gradient_chain(int configurations, std::uint64_t seed);

/// Monte-Carlo hard-soft deviation against the categorical variance sum.
CheckResult check_variance_identity(int distributions, int samples_each,
                                    std::uint64_t seed);

/// Low-temperature saturation: with per-position logit gap >= 1 at
/// tau = 0.01, entropy weight, approximation error and alignment error all
/// collapse; at uniform logits the weight is exactly 1.
CheckResult check_entropy_limits(std::uint64_t seed);

/// Weight range [0, 1] for every schedule and the blend reconstruction
/// e_hat - e_soft = w (e_hard - e_soft) on random inputs.
CheckResult check_weight_schedules(int trials, std::uint64_t seed);

std::vector<CheckResult> run_all_checks(std::uint64_t seed);

}  // namespace entrgi
