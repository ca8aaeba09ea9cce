// SPDX-License-Identifier: Apache-2.0
#include "entrgi/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "entrgi/core_math.hpp"
#include "entrgi/errors.hpp"

namespace entrgi {

const char* schedule_name(WeightSchedule schedule) {
  switch (schedule) {
    case WeightSchedule::kExpectation: return "expectation";
    case WeightSchedule::kAps: return "aps";
    case WeightSchedule::kEntrgi: return "entrgi";
    case WeightSchedule::kInvEntrgi: return "inv_entrgi";
    case WeightSchedule::kL2Norm: return "l2norm";
    case WeightSchedule::kNone: return "bon";
  }
  return "unknown";
}

std::optional<WeightSchedule> parse_schedule(std::string_view name) {
  if (name == "expectation") return WeightSchedule::kExpectation;
  if (name == "aps") return WeightSchedule::kAps;
  if (name == "entrgi") return WeightSchedule::kEntrgi;
  if (name == "inv_entrgi") return WeightSchedule::kInvEntrgi;
  if (name == "l2norm") return WeightSchedule::kL2Norm;
  if (name == "bon" || name == "none") return WeightSchedule::kNone;
  return std::nullopt;
}

void GuidanceConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidParameterError("GuidanceConfig: eta must be > 0");
  if (m_steps < 0) throw InvalidParameterError("GuidanceConfig: m_steps must be >= 0");
  if (n_trajectories < 1) {
    throw InvalidParameterError("GuidanceConfig: n_trajectories must be >= 1");
  }
  if (!(tau > 0.0)) throw InvalidParameterError("GuidanceConfig: tau must be > 0");
  if (unmask_per_step < 1) {
    throw InvalidParameterError("GuidanceConfig: unmask_per_step must be >= 1");
  }
  if (clip_norm && !(*clip_norm > 0.0)) {
    throw InvalidParameterError("GuidanceConfig: clip_norm must be > 0");
  }
  if (forced_weight && (*forced_weight < 0.0 || *forced_weight > 1.0)) {
    throw InvalidParameterError("GuidanceConfig: forced_weight must be in [0,1]");
  }
}

KeyValueFile GuidanceConfig::to_kv() const {
  KeyValueFile kv;
  kv.set("schedule", schedule_name(schedule));
  kv.set("eta", format_double(eta));
  kv.set("m_steps", std::to_string(m_steps));
  kv.set("n_trajectories", std::to_string(n_trajectories));
  kv.set("tau", format_double(tau));
  kv.set("seed", format_u64(seed));
  if (clip_norm) kv.set("clip_norm", format_double(*clip_norm));
  kv.set("resample_hard", resample_hard ? "1" : "0");
  kv.set("eos_deprioritize", eos_deprioritize ? "1" : "0");
  kv.set("k_per_step", std::to_string(unmask_per_step));
  return kv;
}

GuidanceConfig GuidanceConfig::from_kv(const KeyValueFile& kv) {
  GuidanceConfig cfg;
  const std::string schedule_key = kv.get_string("schedule", "entrgi");
  const auto parsed = parse_schedule(schedule_key);
  if (!parsed) {
    throw InvalidParameterError("GuidanceConfig: unknown schedule: " + schedule_key);
  }
  cfg.schedule = *parsed;
  cfg.eta = kv.get_double("eta", cfg.eta);
  cfg.m_steps = static_cast<int>(kv.get_int("m_steps", cfg.m_steps));
  cfg.n_trajectories =
      static_cast<int>(kv.get_int("n_trajectories", cfg.n_trajectories));
  cfg.tau = kv.get_double("tau", cfg.tau);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  if (kv.has("clip_norm")) cfg.clip_norm = kv.get_double("clip_norm", 0.0);
  cfg.resample_hard = kv.get_bool("resample_hard", cfg.resample_hard);
  cfg.eos_deprioritize = kv.get_bool("eos_deprioritize", cfg.eos_deprioritize);
  cfg.unmask_per_step = static_cast<int>(kv.get_int("k_per_step", 1));
  return cfg;
}

std::vector<double> compute_weights(const std::vector<std::vector<double>>& q_block,
                                    WeightSchedule schedule,
                                    const std::vector<double>* hard_soft_gaps) {
  const std::size_t n = q_block.size();
  std::vector<double> weights(n, 0.0);
  switch (schedule) {
    case WeightSchedule::kExpectation:
    case WeightSchedule::kNone:
      break;
    case WeightSchedule::kAps:
      std::fill(weights.begin(), weights.end(), 1.0);
      break;
    case WeightSchedule::kEntrgi:
    case WeightSchedule::kInvEntrgi: {
      for (std::size_t i = 0; i < n; ++i) {
        const double log_k = std::log(static_cast<double>(q_block[i].size()));
        double w = log_k > 0.0 ? entropy(q_block[i]) / log_k : 0.0;
        if (schedule == WeightSchedule::kInvEntrgi) w = 1.0 - w;
        weights[i] = std::clamp(w, 0.0, 1.0);
      }
      break;
    }
    case WeightSchedule::kL2Norm: {
      if (hard_soft_gaps == nullptr || hard_soft_gaps->size() != n) {
        throw ContractViolationError(
            "compute_weights: l2norm schedule needs hard-soft gaps");
      }
      const double max_gap =
          n == 0 ? 0.0 : *std::max_element(hard_soft_gaps->begin(),
                                           hard_soft_gaps->end());
      if (max_gap > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
          weights[i] = std::clamp((*hard_soft_gaps)[i] / max_gap, 0.0, 1.0);
        }
      }
      break;
    }
  }
  return weights;
}

RewardInput build_reward_input(const SequenceState& z,
                               const std::vector<std::vector<double>>& psi_block,
                               double tau, WeightSchedule schedule,
                               const EmbeddingTable& table, Rng& rng,
                               const std::optional<double>& forced_weight,
                               const std::vector<int>* fixed_hard) {
  const std::size_t n_masked = z.masked_positions.size();
  if (psi_block.size() != n_masked) {
    throw ContractViolationError(
        "build_reward_input: psi_block does not cover the mask set");
  }
  if (fixed_hard && fixed_hard->size() != n_masked) {
    throw ContractViolationError("build_reward_input: fixed_hard size mismatch");
  }

  const int length = static_cast<int>(z.tokens.size());
  RewardInput input;
  input.embeddings = EmbeddingSeq(length, table.dim());
  input.guided.assign(length, false);
  input.masked.resize(n_masked);

  std::vector<std::vector<double>> q_block(n_masked);
  std::vector<double> gaps(n_masked);
  for (std::size_t i = 0; i < n_masked; ++i) {
    MaskedPositionInput& m = input.masked[i];
    m.position = z.masked_positions[i];
    m.q = softmax_temp(psi_block[i], tau);
    m.hard_token = fixed_hard ? (*fixed_hard)[i]
                              : sample_categorical(m.q, rng.next_double());
    m.e_soft = soft_embedding(m.q, table);
    const auto hard_row = table.row(m.hard_token);
    m.e_hard.assign(hard_row.begin(), hard_row.end());
    m.entropy_value = entropy(m.q);
    m.gap = euclidean_distance(m.e_hard, m.e_soft);
    q_block[i] = m.q;
    gaps[i] = m.gap;
  }

  std::vector<double> weights;
  if (forced_weight) {
    weights.assign(n_masked, *forced_weight);
  } else {
    weights = compute_weights(q_block, schedule, &gaps);
  }

  for (std::size_t i = 0; i < n_masked; ++i) {
    MaskedPositionInput& m = input.masked[i];
    m.weight = weights[i];
    auto out = input.embeddings.row(m.position);
    // Exact endpoints matter: w == 1 must reproduce the hard row bitwise so
    // the aligned-to-token error is exactly zero, and w == 0 the soft one.
    if (m.weight == 0.0) {
      std::copy(m.e_soft.begin(), m.e_soft.end(), out.begin());
    } else if (m.weight == 1.0) {
      std::copy(m.e_hard.begin(), m.e_hard.end(), out.begin());
    } else {
      for (int c = 0; c < table.dim(); ++c) {
        out[c] = m.e_soft[c] + m.weight * (m.e_hard[c] - m.e_soft[c]);
      }
    }
    input.guided[m.position] = true;
  }

  for (int pos = 0; pos < length; ++pos) {
    if (input.guided[pos]) continue;
    const int token = z.tokens[pos];
    if (token < 0 || token >= table.vocab_k()) {
      throw ContractViolationError(
          "build_reward_input: committed position holds a non-vocabulary token");
    }
    const auto row = table.row(token);
    std::copy(row.begin(), row.end(), input.embeddings.row(pos).begin());
  }
  return input;
}

std::vector<std::vector<double>> guidance_gradient(const RewardModel& model,
                                                   const RewardInput& input,
                                                   const EmbeddingTable& table,
                                                   double tau,
                                                   const PromptContext& ctx) {
  const EmbeddingSeq reward_grad = model.input_gradient(input.embeddings, ctx);
  for (double v : reward_grad.data) {
    if (!std::isfinite(v)) {
      throw NumericFailureError("guidance_gradient: non-finite reward gradient");
    }
  }
  const int k = table.vocab_k();
  std::vector<std::vector<double>> grads(input.masked.size());
  for (std::size_t i = 0; i < input.masked.size(); ++i) {
    const MaskedPositionInput& m = input.masked[i];
    const auto r = reward_grad.row(m.position);
    // u = E r, then g = J_sm^T u = (q . u - q <q,u>) / tau. Equal to the
    // explicit (dR/de) E^T J_sm chain because J_sm is symmetric.
    std::vector<double> u(k);
    for (int t = 0; t < k; ++t) u[t] = dot(table.row(t), r);
    const double mean = dot(m.q, u);
    std::vector<double>& g = grads[i];
    g.resize(k);
    for (int t = 0; t < k; ++t) g[t] = m.q[t] * (u[t] - mean) / tau;
  }
  return grads;
}

namespace {

void clip_gradient(std::vector<double>& g, double max_norm) {
  const double n = norm(g);
  if (n > max_norm) {
    const double scale = max_norm / n;
    for (double& v : g) v *= scale;
  }
}

StepTelemetry make_record(const RewardInput& input, const EmbeddingTable& table,
                          int timestep, int inner_iteration, double reward) {
  StepTelemetry rec;
  rec.timestep = timestep;
  rec.inner_iteration = inner_iteration;
  rec.reward = reward;
  rec.masked_count = static_cast<int>(input.masked.size());
  rec.entropy.reserve(input.masked.size());
  for (const MaskedPositionInput& m : input.masked) {
    rec.entropy.push_back(m.entropy_value);
    rec.weight.push_back(m.weight);
    rec.gap.push_back(m.gap);
    rec.approx_error.push_back(approx_error(m.weight, m.e_hard, m.e_soft));
    rec.align_error.push_back(
        align_error(input.embeddings.row(m.position), table));
  }
  return rec;
}

}  // namespace

StepOutcome guided_denoise_step(const SequenceState& z, const Denoiser& denoiser,
                                const RewardModel& model, const EmbeddingTable& table,
                                const GuidanceConfig& config, const Vocabulary& vocab,
                                const PromptContext& ctx, const Rng& trajectory_rng) {
  if (z.timestep < 1) {
    throw ContractViolationError("guided_denoise_step: timestep must be >= 1");
  }
  const Rng step_rng = trajectory_rng.derive(
      kStreamTimestep, static_cast<std::uint64_t>(z.timestep));

  LogitBlock psi = denoiser.predict(z);
  if (psi.rows.size() != z.masked_positions.size()) {
    throw ContractViolationError("guided_denoise_step: denoiser block mismatch");
  }

  StepOutcome outcome;
  const bool run_inner =
      config.schedule != WeightSchedule::kNone && config.m_steps > 0;
  if (run_inner) {
    std::vector<int> frozen_hard;
    for (int j = 1; j <= config.m_steps; ++j) {
      Rng inner_rng = step_rng.derive(kStreamInner, static_cast<std::uint64_t>(j));
      const bool reuse_hard = !config.resample_hard && j > 1;
      RewardInput input = build_reward_input(
          z, psi.rows, config.tau, config.schedule, table, inner_rng,
          config.forced_weight, reuse_hard ? &frozen_hard : nullptr);
      if (!config.resample_hard && j == 1) {
        frozen_hard.resize(input.masked.size());
        for (std::size_t i = 0; i < input.masked.size(); ++i) {
          frozen_hard[i] = input.masked[i].hard_token;
        }
      }
      const double reward_value = model.value(input.embeddings, ctx);
      if (!std::isfinite(reward_value)) {
        throw NumericFailureError("guided_denoise_step: non-finite reward value");
      }
      std::vector<std::vector<double>> grads =
          guidance_gradient(model, input, table, config.tau, ctx);
      outcome.records.push_back(
          make_record(input, table, z.timestep, j, reward_value));
      for (std::size_t i = 0; i < grads.size(); ++i) {
        if (config.clip_norm) clip_gradient(grads[i], *config.clip_norm);
        for (std::size_t t = 0; t < grads[i].size(); ++t) {
          psi.rows[i][t] += config.eta * grads[i][t];
        }
      }
    }
  }

  std::vector<std::vector<double>> q_block;
  q_block.reserve(psi.rows.size());
  for (const auto& row : psi.rows) q_block.push_back(softmax_temp(row, config.tau));
  const std::vector<int> picked =
      select_unmask_set(q_block, config.unmask_per_step, config.eos_deprioritize,
                        vocab.eos_id);
  std::vector<int> positions;
  positions.reserve(picked.size());
  for (int idx : picked) positions.push_back(z.masked_positions[idx]);
  Rng commit_rng = step_rng.derive(kStreamCommit, 0);
  outcome.state = commit_step(z, q_block, positions, commit_rng);
  return outcome;
}

double GuidedRunResult::top1() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const TrajectoryResult& t : trajectories) {
    if (!t.failed) best = std::max(best, t.reward);
  }
  return best;
}

double GuidedRunResult::avg_n() const {
  double total = 0.0;
  int n = 0;
  for (const TrajectoryResult& t : trajectories) {
    if (!t.failed) {
      total += t.reward;
      ++n;
    }
  }
  return n > 0 ? total / n : 0.0;
}

bool GuidedRunResult::any_failed() const {
  for (const TrajectoryResult& t : trajectories) {
    if (t.failed) return true;
  }
  return false;
}

GuidedRunResult generate_guided(const PromptContext& ctx, const Denoiser& denoiser,
                                const RewardModel& model, const EmbeddingTable& table,
                                const GuidanceConfig& config, const Vocabulary& vocab,
                                int length, int steps) {
  config.validate();
  if (steps * config.unmask_per_step != length) {
    throw InvalidParameterError(
        "generate_guided: steps * unmask_per_step must equal length");
  }
  GuidedRunResult result;
  result.trajectories.resize(config.n_trajectories);
  const Rng root(config.seed);
  for (int i = 0; i < config.n_trajectories; ++i) {
    TrajectoryResult& traj = result.trajectories[i];
    const Rng traj_rng = root.derive(kStreamTrajectory, static_cast<std::uint64_t>(i));
    try {
      SequenceState z = SequenceState::all_masked(length, vocab.mask_id(), steps);
      while (z.timestep > 0) {
        StepOutcome outcome = guided_denoise_step(z, denoiser, model, table,
                                                  config, vocab, ctx, traj_rng);
        for (auto& rec : outcome.records) {
          traj.records.push_back(std::move(rec));
        }
        z = std::move(outcome.state);
      }
      traj.tokens = z.tokens;
      traj.reward = score_discrete(z.tokens, table, model, ctx);
    } catch (const NumericFailureError& err) {
      traj.failed = true;
      traj.failure = err.what();
    }
  }
  return result;
}

}  // namespace entrgi
