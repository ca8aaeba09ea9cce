// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "entrgi/diffusion.hpp"
#include "entrgi/reward.hpp"
#include "entrgi/rng.hpp"
#include "entrgi/telemetry.hpp"
#include "entrgi/text_io.hpp"

namespace entrgi {

/// How much of the sampled hard embedding enters the reward input. All
/// schedules produce weights in [0, 1]; kNone skips the gradient loop
/// entirely (best-of-N mode).
enum class WeightSchedule {
  kExpectation,  // w = 0: pure continuous relaxation
  kAps,          // w = 1: straight-through hard embedding
  kEntrgi,       // w = H(q) / ln K
  kInvEntrgi,    // w = 1 - H(q) / ln K
  kL2Norm,       // w = gap / max gap over masked positions
  kNone,         // no gradient loop
};

const char* schedule_name(WeightSchedule schedule);
std::optional<WeightSchedule> parse_schedule(std::string_view name);

struct GuidanceConfig {
  WeightSchedule schedule = WeightSchedule::kEntrgi;
  double eta = 0.5;
  int m_steps = 3;
  int n_trajectories = 4;
  double tau = 0.7;
  std::uint64_t seed = 0;
  std::optional<double> clip_norm;  // per-position gradient norm clip

  // Test/ablation knobs.
  std::optional<double> forced_weight;  // overrides schedule weights
  bool resample_hard = true;            // fresh x^l every inner iteration
  bool eos_deprioritize = true;
  int unmask_per_step = 1;

  void validate() const;

  /// Flat key-value form (schedule, eta, m_steps, n_trajectories, tau, seed,
  /// clip_norm?, plus the ablation knobs). forced_weight is a programmatic
  /// hook and never serialized.
  KeyValueFile to_kv() const;
  static GuidanceConfig from_kv(const KeyValueFile& kv);
};

/// Cached forward quantities for one masked position inside an inner
/// iteration.
struct MaskedPositionInput {
  int position = 0;  // absolute index in the sequence
  std::vector<double> q;
  int hard_token = 0;
  std::vector<double> e_soft;
  std::vector<double> e_hard;
  double weight = 0.0;
  double entropy_value = 0.0;
  double gap = 0.0;  // ||e_hard - e_soft||
};

/// Input to the reward model: committed positions carry their exact table
/// row; masked positions carry e_soft + w (e_hard - e_soft), with the blend
/// term treated as a constant when gradients are taken.
struct RewardInput {
  EmbeddingSeq embeddings;
  std::vector<bool> guided;  // per position: true = guided blend
  std::vector<MaskedPositionInput> masked;
};

/// Per-position weights for a schedule. kL2Norm needs the hard-soft gaps of
/// the same inner iteration; pass them via `hard_soft_gaps` (all-zero gaps
/// degenerate to w = 0, the expectation limit).
std::vector<double> compute_weights(const std::vector<std::vector<double>>& q_block,
                                    WeightSchedule schedule,
                                    const std::vector<double>* hard_soft_gaps = nullptr);

/// One forward construction of the reward input from the current logits:
/// q = softmax(psi / tau), fresh hard samples x ~ q, soft and hard
/// embeddings, schedule weights, and the blended e_hat. `fixed_hard`, when
/// given, reuses previously sampled hard tokens instead of drawing.
RewardInput build_reward_input(const SequenceState& z,
                               const std::vector<std::vector<double>>& psi_block,
                               double tau, WeightSchedule schedule,
                               const EmbeddingTable& table, Rng& rng,
                               const std::optional<double>& forced_weight = {},
                               const std::vector<int>* fixed_hard = nullptr);

/// Closed-form gradient of the reward with respect to the logits of each
/// masked position: (dR/de_hat^l) E^T J_sm(q^l, tau), with dR/de_hat taken
/// from one joint reward evaluation over the full sequence so cross-position
/// coupling flows through the reward model. The blend term is constant, so
/// gradients flow only through the soft embedding.
std::vector<std::vector<double>> guidance_gradient(const RewardModel& model,
                                                   const RewardInput& input,
                                                   const EmbeddingTable& table,
                                                   double tau,
                                                   const PromptContext& ctx);

struct StepOutcome {
  SequenceState state;
  std::vector<StepTelemetry> records;  // one per inner iteration
};

/// One guided reverse step: initialize psi from the denoiser, run M inner
/// iterations of {build input, gradient, psi += eta g}, then select and
/// commit from the post-guidance distribution.
StepOutcome guided_denoise_step(const SequenceState& z, const Denoiser& denoiser,
                                const RewardModel& model, const EmbeddingTable& table,
                                const GuidanceConfig& config, const Vocabulary& vocab,
                                const PromptContext& ctx, const Rng& trajectory_rng);

struct TrajectoryResult {
  std::vector<int> tokens;
  double reward = 0.0;
  bool failed = false;
  std::string failure;
  std::vector<StepTelemetry> records;
};

struct GuidedRunResult {
  std::vector<TrajectoryResult> trajectories;

  double top1() const;
  double avg_n() const;
  bool any_failed() const;
};

/// N independent trajectories on substreams derived from (config.seed,
/// trajectory index); a numeric failure marks that trajectory failed without
/// aborting its siblings. Final sequences are scored discretely.
GuidedRunResult generate_guided(const PromptContext& ctx, const Denoiser& denoiser,
                                const RewardModel& model, const EmbeddingTable& table,
                                const GuidanceConfig& config, const Vocabulary& vocab,
                                int length, int steps);

}  // namespace entrgi
