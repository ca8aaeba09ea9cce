// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "entrgi/rng.hpp"

namespace entrgi {

/// L embedding vectors of dimension d, stored row-major.
struct EmbeddingSeq {
  int length = 0;
  int dim = 0;
  std::vector<double> data;

  EmbeddingSeq() = default;
  EmbeddingSeq(int l, int d)
      : length(l), dim(d), data(static_cast<std::size_t>(l) * d, 0.0) {}

  std::span<double> row(int l) {
    return {data.data() + static_cast<std::size_t>(l) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> row(int l) const {
    return {data.data() + static_cast<std::size_t>(l) * dim,
            static_cast<std::size_t>(dim)};
  }
};

/// Opaque per-prompt descriptor passed through to reward models, so
/// task-conditioned scorers fit the same interface. The reference backends
/// carry their parameters directly and ignore it.
struct PromptContext {
  std::uint64_t key = 0;
};

/// Token embedding rows of the reward model, one per actual token. Rows are
/// validated pairwise distinct at construction.
class EmbeddingTable {
 public:
  EmbeddingTable(int vocab_k, int dim, std::vector<double> rows,
                 std::uint64_t seed = 0, bool unit_norm = false);

  int vocab_k() const { return vocab_k_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  bool unit_norm() const { return unit_norm_; }

  std::span<const double> row(int token) const {
    return {rows_.data() + static_cast<std::size_t>(token) * dim_,
            static_cast<std::size_t>(dim_)};
  }

  /// Largest pairwise row distance; an upper bound on any hard-soft gap.
  double max_row_gap() const { return max_row_gap_; }

  void save(std::ostream& out) const;
  static EmbeddingTable load(std::istream& in);

 private:
  int vocab_k_ = 0;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  bool unit_norm_ = false;
  double max_row_gap_ = 0.0;
  std::vector<double> rows_;
};

/// Rows drawn i.i.d. standard normal from the seeded stream, optionally
/// normalized to unit length. Deterministic for a fixed seed.
EmbeddingTable build_embedding_table(int vocab_k, int dim, std::uint64_t seed,
                                     bool unit_norm);

/// Differentiable scalar score over a sequence of embedding vectors.
/// Implementations are immutable after construction; value/input_gradient
/// are pure and safe to call concurrently.
class RewardModel {
 public:
  virtual ~RewardModel() = default;

  virtual double value(const EmbeddingSeq& e, const PromptContext& ctx) const = 0;

  /// dR/de^l for every position l, in one sequence-shaped block.
  virtual EmbeddingSeq input_gradient(const EmbeddingSeq& e,
                                      const PromptContext& ctx) const = 0;

  virtual int dim() const = 0;
  virtual std::string name() const = 0;
};

/// -sum_l ||e^l - c^l||^2 with per-position targets c. Concave with a global
/// maximum at e = c, which makes monotone-ascent checks possible.
class QuadraticReward : public RewardModel {
 public:
  explicit QuadraticReward(EmbeddingSeq targets);

  double value(const EmbeddingSeq& e, const PromptContext& ctx) const override;
  EmbeddingSeq input_gradient(const EmbeddingSeq& e,
                              const PromptContext& ctx) const override;
  int dim() const override { return targets_.dim; }
  std::string name() const override { return "quadratic"; }

  const EmbeddingSeq& targets() const { return targets_; }

 private:
  EmbeddingSeq targets_;
};

/// (1/L) sum_l <e^l, p> for a unit prototype direction p. Linear, so the
/// input gradient is the constant p/L at every position.
class PrototypeReward : public RewardModel {
 public:
  explicit PrototypeReward(std::vector<double> prototype);

  double value(const EmbeddingSeq& e, const PromptContext& ctx) const override;
  EmbeddingSeq input_gradient(const EmbeddingSeq& e,
                              const PromptContext& ctx) const override;
  int dim() const override { return static_cast<int>(prototype_.size()); }
  std::string name() const override { return "prototype"; }

  std::span<const double> prototype() const { return prototype_; }

 private:
  std::vector<double> prototype_;
};

/// Two affine layers with a tanh nonlinearity over the mean-pooled
/// embedding; parameters are fixed random draws from a named seed. The
/// input gradient is hand-derived backpropagation.
class MLPReward : public RewardModel {
 public:
  MLPReward(int dim, int hidden, std::uint64_t seed);

  double value(const EmbeddingSeq& e, const PromptContext& ctx) const override;
  EmbeddingSeq input_gradient(const EmbeddingSeq& e,
                              const PromptContext& ctx) const override;
  int dim() const override { return dim_; }
  std::string name() const override { return "mlp"; }

  void save(std::ostream& out) const;
  static MLPReward load(std::istream& in);

 private:
  MLPReward() = default;
  std::vector<double> hidden_activations(const EmbeddingSeq& e,
                                         std::vector<double>* pooled) const;

  int dim_ = 0;
  int hidden_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> w1_;  // hidden x dim, row-major
  std::vector<double> b1_;  // hidden
  std::vector<double> w2_;  // hidden
  double b2_ = 0.0;
};

/// Probability-weighted average of table rows: e_bar = sum_i q_i E[i].
std::vector<double> soft_embedding(std::span<const double> q,
                                   const EmbeddingTable& table);

/// Reward of a finished (mask-free) token sequence under hard embeddings.
double score_discrete(const std::vector<int>& tokens, const EmbeddingTable& table,
                      const RewardModel& model, const PromptContext& ctx);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  int trials = 0;
  int worst_trial = -1;
};

/// Compares input_gradient against the central-difference oracle on random
/// inputs drawn from the seeded stream.
GradientCheckReport check_reward_gradient(const RewardModel& model, int length,
                                          int trials, std::uint64_t seed);

}  // namespace entrgi
