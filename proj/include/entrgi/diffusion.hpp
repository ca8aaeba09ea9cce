// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "entrgi/rng.hpp"

namespace entrgi {

/// K actual tokens 0..K-1 plus one mask token. By convention the mask id is
/// K, the (K+1)-th symbol; the optional EOS id is one of the actual tokens.
struct Vocabulary {
  int size_k = 0;
  std::optional<int> eos_id;

  int mask_id() const { return size_k; }
};

/// Partially masked token sequence z_t. Positions leave masked_positions
/// exactly once and their token never changes afterwards.
struct SequenceState {
  std::vector<int> tokens;
  std::vector<int> masked_positions;  // ascending
  int timestep = 0;

  static SequenceState all_masked(int length, int mask_id, int timestep);

  bool is_masked(int position, int mask_id) const {
    return tokens[position] == mask_id;
  }
  int masked_count() const { return static_cast<int>(masked_positions.size()); }
};

/// One logit vector over the K actual tokens per currently masked position,
/// aligned with SequenceState::masked_positions.
struct LogitBlock {
  std::vector<std::vector<double>> rows;
};

/// Frozen per-position predictor. Implementations must be deterministic for
/// a fixed input state and are shared immutably across trajectory workers.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual LogitBlock predict(const SequenceState& z) const = 0;
  virtual int vocab_size() const = 0;
};

/// Count-based denoiser keyed on the nearest unmasked neighbor on each side.
/// Logits are ln(counts + alpha); contexts never seen in the corpus fall
/// back to the global unigram counts. Fitting is closed-form counting, so no
/// gradient training is needed anywhere in the pipeline.
class ContextTableDenoiser : public Denoiser {
 public:
  static constexpr int kNoContext = -1;

  ContextTableDenoiser(int vocab_k, double alpha);

  LogitBlock predict(const SequenceState& z) const override;
  int vocab_size() const override { return vocab_k_; }
  double alpha() const { return alpha_; }

  /// Count vector for a context, or the unigram fallback when unseen.
  const std::vector<double>& counts_for(int left, int right) const;
  void add_observation(int left, int right, int token);

  void save(std::ostream& out) const;
  static ContextTableDenoiser load(std::istream& in);
  std::string serialize() const;

 private:
  std::uint64_t context_key(int left, int right) const {
    const auto width = static_cast<std::uint64_t>(vocab_k_) + 2;
    return static_cast<std::uint64_t>(left + 1) * width +
           static_cast<std::uint64_t>(right + 1);
  }

  int vocab_k_ = 0;
  double alpha_ = 0.0;
  std::unordered_map<std::uint64_t, std::vector<double>> counts_;
  std::vector<double> unigram_;
};

/// Fits the context table by treating every corpus position as a prediction
/// target with its full left/right neighbors as context.
ContextTableDenoiser fit_context_table(const std::vector<std::vector<int>>& corpus,
                                       int vocab_k, double alpha);

/// Fixed random logits per position, drawn once from a seed. A stand-in
/// denoiser for tests and benchmarks that need no corpus.
class FixedLogitDenoiser : public Denoiser {
 public:
  FixedLogitDenoiser(int vocab_k, int length, std::uint64_t seed,
                     double scale = 1.0);

  LogitBlock predict(const SequenceState& z) const override;
  int vocab_size() const override { return vocab_k_; }

 private:
  int vocab_k_ = 0;
  std::vector<std::vector<double>> per_position_;
};

/// Picks the k masked positions to unmask: ascending entropy, ties broken by
/// ascending position index. With the EOS rule on, any position whose argmax
/// token is the EOS id ranks after every position whose argmax differs.
/// Returns indices into the q_block (i.e. into masked_positions), in rank
/// order.
std::vector<int> select_unmask_set(const std::vector<std::vector<double>>& q_block,
                                   int k, bool eos_deprioritize,
                                   std::optional<int> eos_id);

/// Unmask-and-commit: samples a token for each selected position from its
/// distribution (inverse CDF over the K actual tokens, draws in ascending
/// position order), copies everything else verbatim, decrements the
/// timestep. `selected` holds absolute sequence positions.
SequenceState commit_step(const SequenceState& z,
                          const std::vector<std::vector<double>>& q_block,
                          const std::vector<int>& selected, Rng& rng);

/// Full reverse loop without guidance: predict, soften, select, commit,
/// from an all-mask string at t = steps down to t = 0. Requires
/// steps * k_per_step == length so every position commits exactly once.
SequenceState generate_unguided(const Denoiser& denoiser, const Vocabulary& vocab,
                                int length, int steps, int k_per_step, double tau,
                                bool eos_deprioritize, const Rng& trajectory_rng);

/// Corpus files: one sequence per line, whitespace-separated token ids.
std::vector<std::vector<int>> read_corpus(std::istream& in);
void write_corpus(std::ostream& out, const std::vector<std::vector<int>>& corpus);

}  // namespace entrgi
