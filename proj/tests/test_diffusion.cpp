// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "entrgi/core_math.hpp"
#include "entrgi/diffusion.hpp"
#include "entrgi/errors.hpp"

using namespace entrgi;

namespace {

SequenceState masked_with_context(const std::vector<int>& tokens, int mask_id) {
  SequenceState z;
  z.tokens = tokens;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (tokens[i] == mask_id) z.masked_positions.push_back(i);
  }
  z.timestep = z.masked_count();
  return z;
}

}  // namespace

TEST_CASE("fit_context_table counts the toy corpus") {
  std::vector<std::vector<int>> corpus(100, std::vector<int>{0, 1, 0, 1});
  const ContextTableDenoiser table = fit_context_table(corpus, 2, 0.5);

  // Query context: left neighbor 0, right neighbor missing. Every corpus
  // position with that context holds token 1.
  SequenceState z = masked_with_context({0, 2}, 2);
  const LogitBlock block = table.predict(z);
  REQUIRE(block.rows.size() == 1);
  CHECK(block.rows[0][1] > block.rows[0][0]);
}

TEST_CASE("huge alpha washes out the counts") {
  std::vector<std::vector<int>> corpus(100, std::vector<int>{0, 1, 0, 1});
  const ContextTableDenoiser table = fit_context_table(corpus, 2, 1e12);
  SequenceState z = masked_with_context({0, 2}, 2);
  const auto q = softmax_temp(table.predict(z).rows[0], 1.0);
  CHECK(std::abs(q[0] - q[1]) < 1e-9);
}

TEST_CASE("degenerate corpus concentrates as alpha shrinks") {
  std::vector<std::vector<int>> corpus(50, std::vector<int>(6, 3));
  const ContextTableDenoiser table = fit_context_table(corpus, 5, 1e-9);
  SequenceState z = masked_with_context({3, 5, 3}, 5);
  const auto q = softmax_temp(table.predict(z).rows[0], 1.0);
  CHECK(q[3] > 1.0 - 1e-6);
}

TEST_CASE("context probabilities converge to empirical conditionals") {
  // Deterministic-cycle corpus over K=4: contexts fully determine tokens, so
  // the empirical conditional is one-hot and alpha -> 0 must reproduce it.
  std::vector<std::vector<int>> corpus;
  for (int s = 0; s < 700; ++s) {
    std::vector<int> seq(16);
    seq[0] = s % 4;
    for (int i = 1; i < 16; ++i) seq[i] = (seq[i - 1] + 1) % 4;
    corpus.push_back(std::move(seq));
  }
  REQUIRE(corpus.size() * corpus[0].size() >= 10000);
  const ContextTableDenoiser table = fit_context_table(corpus, 4, 1e-6);
  SequenceState z = masked_with_context({0, 4, 2}, 4);
  const auto q = softmax_temp(table.predict(z).rows[0], 1.0);
  double tv = 0.0;
  for (int t = 0; t < 4; ++t) tv += std::abs(q[t] - (t == 1 ? 1.0 : 0.0));
  CHECK(tv / 2.0 <= 1e-3);
}

TEST_CASE("unseen contexts fall back to the unigram counts") {
  std::vector<std::vector<int>> corpus(100, std::vector<int>{0, 1, 0, 1});
  const ContextTableDenoiser table = fit_context_table(corpus, 3, 0.5);

  // Context (2, 2) never occurs; the unigram holds 200 each of tokens 0, 1
  // and none of token 2.
  CHECK(table.counts_for(2, 2) == std::vector<double>{200.0, 200.0, 0.0});

  // A fully masked state has no context on either side, which is also
  // unseen for corpora of length >= 2.
  SequenceState all_masked = SequenceState::all_masked(4, 3, 4);
  const LogitBlock block = table.predict(all_masked);
  for (const auto& row : block.rows) {
    CHECK(row[0] == row[1]);
    CHECK(row[2] < row[0]);
  }
}

TEST_CASE("fit_context_table rejects bad inputs") {
  CHECK_THROWS_AS(fit_context_table({}, 4, 0.5), InvalidInputError);
  CHECK_THROWS_AS(fit_context_table({{0, 9}}, 4, 0.5), InvalidInputError);
}

TEST_CASE("snapshot round trip is byte stable") {
  std::vector<std::vector<int>> corpus(30, std::vector<int>{0, 2, 1, 3, 2});
  const ContextTableDenoiser table = fit_context_table(corpus, 4, 0.25);
  const std::string first = table.serialize();
  std::istringstream in(first);
  const ContextTableDenoiser reloaded = ContextTableDenoiser::load(in);
  CHECK(reloaded.serialize() == first);
  CHECK(reloaded.alpha() == table.alpha());

  SequenceState z = masked_with_context({0, 4, 1}, 4);
  const auto a = table.predict(z);
  const auto b = reloaded.predict(z);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i] == b.rows[i]);
}

TEST_CASE("select_unmask_set ranks by entropy") {
  const std::vector<std::vector<double>> q_block{
      {0.99, 0.01},  // low entropy
      {0.5, 0.5},    // high entropy
      {0.9, 0.1},    // middle
  };
  CHECK(select_unmask_set(q_block, 1, false, std::nullopt) == std::vector<int>{0});
  CHECK(select_unmask_set(q_block, 2, false, std::nullopt) ==
        std::vector<int>{0, 2});
}

TEST_CASE("select_unmask_set pushes EOS-argmax positions last") {
  // Position 0 is low entropy but its argmax is the EOS token.
  const std::vector<std::vector<double>> q_block{
      {0.95, 0.05},
      {0.4, 0.6},
  };
  CHECK(select_unmask_set(q_block, 1, true, 0) == std::vector<int>{1});
  // Rule off: entropy order wins again.
  CHECK(select_unmask_set(q_block, 1, false, 0) == std::vector<int>{0});
  // EOS id that nothing argmaxes to changes nothing.
  CHECK(select_unmask_set(q_block, 1, true, 1) == std::vector<int>{0});
}

TEST_CASE("select_unmask_set breaks ties by position index") {
  const std::vector<std::vector<double>> q_block{
      {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  CHECK(select_unmask_set(q_block, 2, false, std::nullopt) ==
        std::vector<int>{0, 1});
}

TEST_CASE("select_unmask_set rejects oversized k") {
  const std::vector<std::vector<double>> q_block{{0.5, 0.5}};
  CHECK_THROWS_AS(select_unmask_set(q_block, 2, false, std::nullopt),
                  InvalidParameterError);
}

TEST_CASE("commit_step samples deterministically and freezes the rest") {
  SequenceState z = SequenceState::all_masked(4, 9, 4);
  std::vector<std::vector<double>> q_block(4, std::vector<double>(9, 0.0));
  for (auto& q : q_block) q[7] = 1.0;

  Rng rng_a(3);
  const SequenceState next = commit_step(z, q_block, {2}, rng_a);
  CHECK(next.tokens[2] == 7);
  CHECK(next.timestep == 3);
  CHECK(next.masked_positions == std::vector<int>{0, 1, 3});

  // Same stream, same draw.
  Rng rng_b(3);
  const SequenceState again = commit_step(z, q_block, {2}, rng_b);
  CHECK(again.tokens == next.tokens);

  CHECK_THROWS_AS(
      [&] {
        Rng rng_c(3);
        return commit_step(next, q_block, {2}, rng_c);
      }(),
      ContractViolationError);
}

TEST_CASE("generate_unguided fully unmasks") {
  const Vocabulary vocab{6, std::nullopt};
  const FixedLogitDenoiser denoiser(6, 8, 21);
  const SequenceState out =
      generate_unguided(denoiser, vocab, 8, 8, 1, 0.7, false, Rng(5));
  CHECK(out.timestep == 0);
  CHECK(out.masked_count() == 0);
  for (int token : out.tokens) {
    CHECK(token >= 0);
    CHECK(token < 6);
  }
}

TEST_CASE("one-hot denoiser yields a constant sequence") {
  // Logits hugely favoring token 4 at every position.
  class OneHotDenoiser : public Denoiser {
   public:
    LogitBlock predict(const SequenceState& z) const override {
      LogitBlock block;
      for (std::size_t i = 0; i < z.masked_positions.size(); ++i) {
        std::vector<double> row(5, -1e3);
        row[4] = 1e3;
        block.rows.push_back(std::move(row));
      }
      return block;
    }
    int vocab_size() const override { return 5; }
  };
  const Vocabulary vocab{5, std::nullopt};
  const SequenceState out =
      generate_unguided(OneHotDenoiser{}, vocab, 6, 6, 1, 1.0, false, Rng(1));
  for (int token : out.tokens) CHECK(token == 4);
}

TEST_CASE("multi-token unmasking commits k positions per step") {
  const Vocabulary vocab{6, std::nullopt};
  const FixedLogitDenoiser denoiser(6, 8, 33);
  const SequenceState out =
      generate_unguided(denoiser, vocab, 8, 4, 2, 0.7, false, Rng(2));
  CHECK(out.timestep == 0);
  CHECK(out.masked_count() == 0);

  SequenceState z = SequenceState::all_masked(4, 6, 2);
  std::vector<std::vector<double>> q_block(4, std::vector<double>(6, 1.0 / 6));
  Rng rng(1);
  const SequenceState next = commit_step(z, q_block, {0, 3}, rng);
  CHECK(next.masked_count() == 2);
  CHECK(next.masked_positions == std::vector<int>{1, 2});

  Rng rng_b(1);
  CHECK_THROWS_AS(commit_step(z, q_block, {0, 0}, rng_b), ContractViolationError);
}

TEST_CASE("generate_unguided is reproducible and validates the schedule") {
  const Vocabulary vocab{6, std::nullopt};
  const FixedLogitDenoiser denoiser(6, 8, 77);
  const auto a = generate_unguided(denoiser, vocab, 8, 8, 1, 0.7, false, Rng(9));
  const auto b = generate_unguided(denoiser, vocab, 8, 8, 1, 0.7, false, Rng(9));
  CHECK(a.tokens == b.tokens);
  CHECK_THROWS_AS(generate_unguided(denoiser, vocab, 8, 5, 1, 0.7, false, Rng(9)),
                  InvalidParameterError);
}

TEST_CASE("commit monotonicity across a trajectory") {
  const Vocabulary vocab{8, std::nullopt};
  const FixedLogitDenoiser denoiser(8, 12, 100);
  SequenceState z = SequenceState::all_masked(12, vocab.mask_id(), 12);
  const Rng traj(42);
  for (int t = 12; t >= 1; --t) {
    const LogitBlock logits = denoiser.predict(z);
    std::vector<std::vector<double>> q_block;
    for (const auto& row : logits.rows) q_block.push_back(softmax_temp(row, 0.7));
    const auto picked = select_unmask_set(q_block, 1, false, std::nullopt);
    Rng commit_rng = traj.derive(kStreamTimestep, t).derive(kStreamCommit, 0);
    const SequenceState next =
        commit_step(z, q_block, {z.masked_positions[picked[0]]}, commit_rng);
    // Every position outside the old mask set is bitwise unchanged.
    for (int pos = 0; pos < 12; ++pos) {
      if (!z.is_masked(pos, vocab.mask_id())) CHECK(next.tokens[pos] == z.tokens[pos]);
    }
    CHECK(next.masked_count() == z.masked_count() - 1);
    z = next;
  }
  CHECK(z.masked_count() == 0);
  CHECK(z.timestep == 0);
}

TEST_CASE("corpus files round trip") {
  const std::vector<std::vector<int>> corpus{{1, 2, 3}, {0, 0, 5}};
  std::ostringstream out;
  write_corpus(out, corpus);
  CHECK(out.str() == "1 2 3\n0 0 5\n");
  std::istringstream in(out.str());
  CHECK(read_corpus(in) == corpus);
}
