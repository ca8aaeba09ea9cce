// SPDX-License-Identifier: Apache-2.0
#include "entrgi/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "entrgi/core_math.hpp"
#include "entrgi/errors.hpp"
#include "entrgi/guidance.hpp"
#include "entrgi/reward.hpp"
#include "entrgi/rng.hpp"

namespace entrgi {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Relative block error against the FD reference. `floor` bounds the
// denominator at the oracle's own noise scale; below it a relative claim is
// not measurable by finite differences.
double rel_block_error(const std::vector<double>& got,
                       const std::vector<double>& want, double floor = 1e-10) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    diff += (got[i] - want[i]) * (got[i] - want[i]);
    ref += want[i] * want[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

std::unique_ptr<RewardModel> make_backend(int which, const EmbeddingTable& table,
                                          int length, Rng& rng) {
  switch (which) {
    case 0: {
      EmbeddingSeq targets(length, table.dim());
      for (double& v : targets.data) v = rng.next_gaussian();
      return std::make_unique<QuadraticReward>(std::move(targets));
    }
    case 1: {
      std::vector<double> direction(table.dim());
      for (double& v : direction) v = rng.next_gaussian();
      return std::make_unique<PrototypeReward>(std::move(direction));
    }
    default:
      return std::make_unique<MLPReward>(table.dim(), 32, rng.next_u64());
  }
}

}  // namespace

CheckResult check_softmax_jacobian_fd(int trials, std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "softmax-jacobian-vs-fd";
  result.limit = 1e-5;
  Rng root(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.derive(kStreamInner, static_cast<std::uint64_t>(trial));
    const int k = 2 + static_cast<int>(rng.next_double() * 49);
    const double tau = 0.05 + rng.next_double() * 1.95;
    std::vector<double> logits(k);
    for (double& v : logits) v = rng.next_gaussian();
    const std::vector<double> q = softmax_temp(logits, tau);
    const Matrix jac = softmax_jacobian(q, tau);
    for (int coord = 0; coord < k; ++coord) {
      const auto f = [&](std::span<const double> x) {
        return softmax_temp(x, tau)[coord];
      };
      // Step balances truncation (~h^2) against rounding (~eps/h) so the
      // oracle itself resolves 1e-5 relative error on non-saturated rows.
      const std::vector<double> fd = finite_diff_grad(f, logits, 3e-4 * tau);
      std::vector<double> analytic(k);
      for (int c = 0; c < k; ++c) analytic[c] = jac.at(coord, c);
      // Saturated coordinates have gradient rows far below what central
      // differences can resolve; measure those at the noise scale.
      result.worst = std::max(result.worst, rel_block_error(analytic, fd, 1e-5));
    }
  }
  result.passed = result.worst <= result.limit;
  result.elapsed_seconds = timer.seconds();
  return result;
}

CheckResult check_reward_backends_fd(int trials_per_cell, std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "reward-gradients-vs-fd";
  result.limit = 1e-4;
  Rng root(seed);
  std::uint64_t cell = 0;
  for (int k : {8, 50}) {
    for (int d : {4, 16}) {
      const EmbeddingTable table = build_embedding_table(k, d, seed + cell, false);
      for (int length : {4, 16}) {
        for (int backend = 0; backend < 3; ++backend) {
          Rng rng = root.derive(kStreamReward, ++cell);
          const auto model = make_backend(backend, table, length, rng);
          const GradientCheckReport report =
              check_reward_gradient(*model, length, trials_per_cell, rng.next_u64());
          result.worst = std::max(result.worst, report.max_rel_error);
        }
      }
    }
  }
  result.passed = result.worst <= result.limit;
  result.elapsed_seconds = timer.seconds();
  return result;
}

CheckResult check_gradient_chain(int configurations, std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "guidance-gradient-vs-frozen-surrogate";
  result.limit = 1e-4;
  const int k_choices[] = {8, 50};
  const int d_choices[] = {4, 16};
  const int l_choices[] = {4, 16};
  const double tau_choices[] = {0.1, 0.7, 1.0};
  const WeightSchedule schedules[] = {
      WeightSchedule::kExpectation, WeightSchedule::kAps, WeightSchedule::kEntrgi,
      WeightSchedule::kInvEntrgi, WeightSchedule::kL2Norm};

  Rng root(seed);
  for (int cfg = 0; cfg < configurations; ++cfg) {
    Rng rng = root.derive(kStreamInner, static_cast<std::uint64_t>(cfg));
    const int k = k_choices[rng.next_u64() % 2];
    const int d = d_choices[rng.next_u64() % 2];
    const int length = l_choices[rng.next_u64() % 2];
    const double tau = tau_choices[rng.next_u64() % 3];
    const WeightSchedule schedule = schedules[rng.next_u64() % 5];
    const int backend = static_cast<int>(rng.next_u64() % 3);

    const EmbeddingTable table = build_embedding_table(k, d, rng.next_u64(), false);
    const auto model = make_backend(backend, table, length, rng);
    const PromptContext ctx;

    SequenceState z;
    z.tokens.resize(length);
    z.timestep = 1;
    for (int pos = 0; pos < length; ++pos) {
      const bool masked = rng.next_double() < 0.5;
      if (masked) {
        z.tokens[pos] = k;  // mask id
        z.masked_positions.push_back(pos);
      } else {
        z.tokens[pos] = static_cast<int>(rng.next_u64() % k);
      }
    }
    if (z.masked_positions.empty()) {
      z.tokens[0] = k;
      z.masked_positions.push_back(0);
    }
    const int n_masked = z.masked_count();

    std::vector<std::vector<double>> psi(n_masked, std::vector<double>(k));
    for (auto& row : psi) {
      for (double& v : row) v = rng.next_gaussian();
    }

    RewardInput input =
        build_reward_input(z, psi, tau, schedule, table, rng);
    const std::vector<std::vector<double>> impl =
        guidance_gradient(*model, input, table, tau, ctx);

    // Freeze the blend offset c = e_hat - e_soft at the evaluation point;
    // the surrogate moves only the soft embedding.
    std::vector<std::vector<double>> offsets(n_masked);
    for (int i = 0; i < n_masked; ++i) {
      const MaskedPositionInput& m = input.masked[i];
      const auto e_hat = input.embeddings.row(m.position);
      offsets[i].resize(d);
      for (int c = 0; c < d; ++c) offsets[i][c] = e_hat[c] - m.e_soft[c];
    }

    std::vector<double> flat(static_cast<std::size_t>(n_masked) * k);
    for (int i = 0; i < n_masked; ++i) {
      std::copy(psi[i].begin(), psi[i].end(),
                flat.begin() + static_cast<std::ptrdiff_t>(i) * k);
    }
    EmbeddingSeq probe = input.embeddings;
    const auto surrogate = [&](std::span<const double> x) {
      for (int i = 0; i < n_masked; ++i) {
        const std::vector<double> q =
            softmax_temp(x.subspan(static_cast<std::size_t>(i) * k, k), tau);
        const std::vector<double> e_soft = soft_embedding(q, table);
        auto row = probe.row(input.masked[i].position);
        for (int c = 0; c < d; ++c) row[c] = e_soft[c] + offsets[i][c];
      }
      return model->value(probe, ctx);
    };
    const std::vector<double> fd = finite_diff_grad(surrogate, flat, 1e-4 * tau);

    std::vector<double> impl_flat(flat.size());
    for (int i = 0; i < n_masked; ++i) {
      std::copy(impl[i].begin(), impl[i].end(),
                impl_flat.begin() + static_cast<std::ptrdiff_t>(i) * k);
    }
    result.worst = std::max(result.worst, rel_block_error(impl_flat, fd));
  }
  result.passed = result.worst <= result.limit;
  result.elapsed_seconds = timer.seconds();
  std::ostringstream detail;
  detail << configurations << " random configurations";
  result.detail = detail.str();
  return result;
}

CheckResult check_variance_identity(int distributions, int samples_each,
                                    std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "variance-identity-monte-carlo";
  result.limit = 0.02;
  Rng root(seed);
  const EmbeddingTable table = build_embedding_table(16, 8, seed, false);
  for (int i = 0; i < distributions; ++i) {
    Rng rng = root.derive(kStreamInner, static_cast<std::uint64_t>(i));
    std::vector<double> logits(table.vocab_k());
    for (double& v : logits) v = rng.next_gaussian();
    const std::vector<double> q = softmax_temp(logits, 1.0);
    const VarianceIdentityResult check =
        variance_identity_check(q, table, samples_each, rng);
    result.worst = std::max(result.worst, check.rel_gap);
  }
  result.passed = result.worst <= result.limit;
  result.elapsed_seconds = timer.seconds();
  return result;
}

CheckResult check_entropy_limits(std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "entropy-limits";
  result.limit = 1e-3;
  const int k = 16, d = 8, length = 8;
  const EmbeddingTable table = build_embedding_table(k, d, seed, false);
  Rng rng(seed);

  SequenceState z = SequenceState::all_masked(length, k, length);
  std::vector<std::vector<double>> psi(length, std::vector<double>(k));
  for (auto& row : psi) {
    for (double& v : row) v = rng.next_gaussian();
    // Force the top logit at least 1 above every other.
    const auto top = std::max_element(row.begin(), row.end());
    *top += 1.5;
  }
  RewardInput saturated = build_reward_input(z, psi, 0.01,
                                             WeightSchedule::kEntrgi, table, rng);
  for (const MaskedPositionInput& m : saturated.masked) {
    result.worst = std::max(result.worst, m.weight);
    result.worst = std::max(result.worst, approx_error(m.weight, m.e_hard, m.e_soft));
    result.worst = std::max(
        result.worst, align_error(saturated.embeddings.row(m.position), table));
  }
  const bool saturated_ok = result.worst <= result.limit;

  std::vector<std::vector<double>> flat_psi(length,
                                            std::vector<double>(k, 0.0));
  RewardInput uniform = build_reward_input(z, flat_psi, 0.7,
                                           WeightSchedule::kEntrgi, table, rng);
  double uniform_dev = 0.0;
  for (const MaskedPositionInput& m : uniform.masked) {
    uniform_dev = std::max(uniform_dev, std::abs(m.weight - 1.0));
  }
  result.passed = saturated_ok && uniform_dev <= 1e-9;
  result.elapsed_seconds = timer.seconds();
  std::ostringstream detail;
  detail << "uniform-logit weight deviation " << uniform_dev;
  result.detail = detail.str();
  return result;
}

CheckResult check_weight_schedules(int trials, std::uint64_t seed) {
  Stopwatch timer;
  CheckResult result;
  result.name = "weight-range-and-reconstruction";
  result.limit = 1e-12;
  const int k = 12, d = 6, length = 6;
  const EmbeddingTable table = build_embedding_table(k, d, seed, false);
  const WeightSchedule schedules[] = {
      WeightSchedule::kExpectation, WeightSchedule::kAps, WeightSchedule::kEntrgi,
      WeightSchedule::kInvEntrgi, WeightSchedule::kL2Norm};
  Rng root(seed);
  bool range_ok = true;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.derive(kStreamInner, static_cast<std::uint64_t>(trial));
    SequenceState z = SequenceState::all_masked(length, k, length);
    std::vector<std::vector<double>> psi(length, std::vector<double>(k));
    for (auto& row : psi) {
      for (double& v : row) v = rng.next_gaussian() * 2.0;
    }
    for (WeightSchedule schedule : schedules) {
      Rng branch = rng.derive(kStreamInner, static_cast<std::uint64_t>(schedule));
      RewardInput input = build_reward_input(z, psi, 0.7, schedule, table, branch);
      for (const MaskedPositionInput& m : input.masked) {
        if (m.weight < 0.0 || m.weight > 1.0) range_ok = false;
        const auto e_hat = input.embeddings.row(m.position);
        for (int c = 0; c < d; ++c) {
          const double lhs = e_hat[c] - m.e_soft[c];
          const double rhs = m.weight * (m.e_hard[c] - m.e_soft[c]);
          result.worst = std::max(result.worst, std::abs(lhs - rhs));
        }
      }
    }
  }
  result.passed = range_ok && result.worst <= result.limit;
  result.elapsed_seconds = timer.seconds();
  if (!range_ok) result.detail = "weight outside [0,1]";
  return result;
}

std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  std::vector<CheckResult> results;
  results.push_back(check_softmax_jacobian_fd(100, seed));
  results.push_back(check_reward_backends_fd(5, seed + 1));
  results.push_back(check_gradient_chain(100, seed + 2));
  results.push_back(check_variance_identity(20, 100000, seed + 3));
  results.push_back(check_entropy_limits(seed + 4));
  results.push_back(check_weight_schedules(50, seed + 5));
  return results;
}

}  // namespace entrgi
