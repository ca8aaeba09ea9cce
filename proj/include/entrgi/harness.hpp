// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "entrgi/guidance.hpp"
#include "entrgi/text_io.hpp"

namespace entrgi {

inline constexpr const char* kToolVersion = "0.1.0";

/// Synthetic task: a Markov-grammar corpus over K tokens plus a per-prompt
/// reward construction rule. Reward construction is a pure function of
/// (task seed, prompt index), so prompts are reproducible without datasets.
struct TaskSpec {
  std::string name = "markov-grammar";
  int vocab_k = 16;
  int length = 16;
  int steps = 16;
  int band = 3;                // successor band width of the transition matrix
  int corpus_sequences = 2000;
  std::uint64_t corpus_seed = 1;
  double alpha = 0.5;          // context-table smoothing
  int embed_dim = 16;
  bool unit_norm = false;
  std::string reward_backend = "prototype";  // prototype | quadratic | mlp
  int prompt_count = 200;
  std::optional<int> eos_id;
  std::uint64_t task_seed = 1;

  void validate() const;
  Vocabulary vocabulary() const { return Vocabulary{vocab_k, eos_id}; }
};

struct ArmSpec {
  std::string label;
  GuidanceConfig config;
};

struct RunManifest {
  TaskSpec task;
  std::vector<ArmSpec> arms;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int threads = 0;  // <= 0: all hardware threads; 1: serial reference path
  std::optional<std::string> denoiser_snapshot;

  void validate() const;
  KeyValueFile to_kv() const;
  static RunManifest from_kv(const KeyValueFile& kv);
};

/// The stock configuration exercised by the acceptance suite; also shipped
/// as configs/default.manifest.
RunManifest default_manifest();

/// Order-1 Markov chain over K tokens: the successor of token a is uniform
/// over {a+1, ..., a+band} mod K; the first token is uniform. band = 1 is a
/// deterministic cycle, band = K a uniform transition matrix.
std::vector<std::vector<int>> generate_corpus(const TaskSpec& task,
                                              std::uint64_t seed);

std::unique_ptr<RewardModel> make_prompt_reward(const TaskSpec& task,
                                                const EmbeddingTable& table,
                                                int prompt_index);
PromptContext make_prompt_context(const TaskSpec& task, int prompt_index);

struct ArmMetrics {
  std::string label;
  GuidanceConfig config;
  // Indexed [seed_index * prompt_count + prompt]; valid marks runs whose
  // trajectories all finished.
  std::vector<double> top1;
  std::vector<double> avg_n;
  std::vector<char> valid;
  int excluded_runs = 0;

  double mean_top1 = 0.0, se_top1 = 0.0;
  double mean_avg_n = 0.0, se_avg_n = 0.0;
};

struct MetricsTable {
  std::vector<ArmMetrics> arms;
  int prompt_count = 0;
  std::vector<std::uint64_t> seeds;

  const ArmMetrics* find(const std::string& label) const;
};

struct ExperimentResult {
  MetricsTable metrics;
  std::uint64_t content_digest = 0;
  double elapsed_seconds = 0.0;
};

/// Runs every (arm, seed, prompt) unit, each on RNG substreams derived only
/// from (seed, prompt, trajectory), so arms sharing seeds consume identical
/// streams. Units execute in parallel when threads != 1; partial telemetry
/// is merged in a fixed order afterwards, so outputs are byte-identical for
/// every thread count. Writes manifest.txt, snapshots, runs.csv,
/// metrics.csv and per-arm steps.csv / heatmap.csv under out_dir.
ExperimentResult run_experiment(const RunManifest& manifest);

struct PairedStats {
  double mean_difference = 0.0;  // arm_a minus arm_b, Top@1 per prompt
  double p_value = 1.0;          // exact one-sided sign test (a > b)
  int n_positive = 0;
  int n_negative = 0;
  int n_tie = 0;
};

/// Pairs arms per prompt (Top@1 averaged over seeds where both arms are
/// valid) and applies the exact sign test.
PairedStats compare_arms(const MetricsTable& metrics, const std::string& arm_a,
                         const std::string& arm_b);

/// P(X >= n_positive) for X ~ Binomial(n_positive + n_negative, 1/2);
/// returns 1 when there are no untied pairs.
double sign_test_p_value(int n_positive, int n_negative);

std::string metrics_csv(const MetricsTable& metrics);

}  // namespace entrgi
