// SPDX-License-Identifier: Apache-2.0
#include "entrgi/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "entrgi/core_math.hpp"
#include "entrgi/errors.hpp"
#include "entrgi/text_io.hpp"

namespace entrgi {

SequenceState SequenceState::all_masked(int length, int mask_id, int timestep) {
  SequenceState z;
  z.tokens.assign(length, mask_id);
  z.masked_positions.resize(length);
  for (int i = 0; i < length; ++i) z.masked_positions[i] = i;
  z.timestep = timestep;
  return z;
}

ContextTableDenoiser::ContextTableDenoiser(int vocab_k, double alpha)
    : vocab_k_(vocab_k), alpha_(alpha), unigram_(vocab_k, 0.0) {
  if (vocab_k < 1) {
    throw InvalidParameterError("ContextTableDenoiser: vocabulary must be non-empty");
  }
  if (!(alpha > 0.0)) {
    throw InvalidParameterError("ContextTableDenoiser: alpha must be positive");
  }
}

void ContextTableDenoiser::add_observation(int left, int right, int token) {
  auto& vec = counts_[context_key(left, right)];
  if (vec.empty()) vec.assign(vocab_k_, 0.0);
  vec[token] += 1.0;
  unigram_[token] += 1.0;
}

const std::vector<double>& ContextTableDenoiser::counts_for(int left,
                                                            int right) const {
  auto it = counts_.find(context_key(left, right));
  return it == counts_.end() ? unigram_ : it->second;
}

LogitBlock ContextTableDenoiser::predict(const SequenceState& z) const {
  const int mask_id = vocab_k_;
  LogitBlock block;
  block.rows.reserve(z.masked_positions.size());
  for (int pos : z.masked_positions) {
    int left = kNoContext;
    for (int i = pos - 1; i >= 0; --i) {
      if (z.tokens[i] != mask_id) {
        left = z.tokens[i];
        break;
      }
    }
    int right = kNoContext;
    for (int i = pos + 1; i < static_cast<int>(z.tokens.size()); ++i) {
      if (z.tokens[i] != mask_id) {
        right = z.tokens[i];
        break;
      }
    }
    const std::vector<double>& counts = counts_for(left, right);
    std::vector<double> logits(vocab_k_);
    for (int t = 0; t < vocab_k_; ++t) logits[t] = std::log(counts[t] + alpha_);
    block.rows.push_back(std::move(logits));
  }
  return block;
}

void ContextTableDenoiser::save(std::ostream& out) const {
  out << "context-table-v1\n";
  out << "K " << vocab_k_ << " alpha " << format_double(alpha_) << "\n";
  auto dump_counts = [&out](const std::vector<double>& counts) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      out << " " << format_double(counts[i]);
    }
    out << "\n";
  };
  out << "unigram";
  dump_counts(unigram_);
  std::vector<std::uint64_t> keys;
  keys.reserve(counts_.size());
  for (const auto& [key, _] : counts_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  const auto width = static_cast<std::uint64_t>(vocab_k_) + 2;
  for (std::uint64_t key : keys) {
    const int left = static_cast<int>(key / width) - 1;
    const int right = static_cast<int>(key % width) - 1;
    out << "ctx " << left << " " << right;
    dump_counts(counts_.at(key));
  }
}

ContextTableDenoiser ContextTableDenoiser::load(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "context-table-v1") {
    throw InvalidInputError("context table snapshot: bad header: " + header);
  }
  std::string key;
  int k = 0;
  double alpha = 0.0;
  in >> key >> k >> key >> alpha;
  if (!in) throw InvalidInputError("context table snapshot: bad metadata");
  ContextTableDenoiser table(k, alpha);
  in >> key;  // "unigram"
  for (double& v : table.unigram_) in >> v;
  while (in >> key) {
    if (key != "ctx") {
      throw InvalidInputError("context table snapshot: unexpected token: " + key);
    }
    int left = 0, right = 0;
    in >> left >> right;
    std::vector<double> counts(k);
    for (double& v : counts) in >> v;
    if (!in) throw InvalidInputError("context table snapshot: truncated counts");
    table.counts_[table.context_key(left, right)] = std::move(counts);
  }
  return table;
}

std::string ContextTableDenoiser::serialize() const {
  std::ostringstream out;
  save(out);
  return out.str();
}

ContextTableDenoiser fit_context_table(const std::vector<std::vector<int>>& corpus,
                                       int vocab_k, double alpha) {
  if (corpus.empty()) {
    throw InvalidInputError("fit_context_table: empty corpus");
  }
  ContextTableDenoiser table(vocab_k, alpha);
  for (const auto& seq : corpus) {
    const int n = static_cast<int>(seq.size());
    for (int i = 0; i < n; ++i) {
      if (seq[i] < 0 || seq[i] >= vocab_k) {
        throw InvalidInputError("fit_context_table: token outside vocabulary");
      }
      const int left = i > 0 ? seq[i - 1] : ContextTableDenoiser::kNoContext;
      const int right = i + 1 < n ? seq[i + 1] : ContextTableDenoiser::kNoContext;
      table.add_observation(left, right, seq[i]);
    }
  }
  return table;
}

FixedLogitDenoiser::FixedLogitDenoiser(int vocab_k, int length,
                                       std::uint64_t seed, double scale)
    : vocab_k_(vocab_k) {
  Rng rng(seed);
  per_position_.resize(length);
  for (auto& row : per_position_) {
    row.resize(vocab_k);
    for (double& v : row) v = rng.next_gaussian() * scale;
  }
}

LogitBlock FixedLogitDenoiser::predict(const SequenceState& z) const {
  LogitBlock block;
  block.rows.reserve(z.masked_positions.size());
  for (int pos : z.masked_positions) block.rows.push_back(per_position_[pos]);
  return block;
}

std::vector<int> select_unmask_set(const std::vector<std::vector<double>>& q_block,
                                   int k, bool eos_deprioritize,
                                   std::optional<int> eos_id) {
  const int n = static_cast<int>(q_block.size());
  if (k < 1 || k > n) {
    throw InvalidParameterError("select_unmask_set: k out of range");
  }
  struct Ranked {
    bool eos_last;
    double entropy_value;
    int index;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(n);
  for (int i = 0; i < n; ++i) {
    bool eos_last = false;
    if (eos_deprioritize && eos_id.has_value()) {
      const auto& q = q_block[i];
      const int argmax = static_cast<int>(
          std::max_element(q.begin(), q.end()) - q.begin());
      eos_last = (argmax == *eos_id);
    }
    ranked.push_back({eos_last, entropy(q_block[i]), i});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.eos_last != b.eos_last) return !a.eos_last;
    if (a.entropy_value != b.entropy_value) return a.entropy_value < b.entropy_value;
    return a.index < b.index;
  });
  std::vector<int> selected(k);
  for (int i = 0; i < k; ++i) selected[i] = ranked[i].index;
  return selected;
}

SequenceState commit_step(const SequenceState& z,
                          const std::vector<std::vector<double>>& q_block,
                          const std::vector<int>& selected, Rng& rng) {
  if (q_block.size() != z.masked_positions.size()) {
    throw ContractViolationError("commit_step: q_block does not cover the mask set");
  }
  SequenceState next;
  next.tokens = z.tokens;
  next.timestep = z.timestep - 1;

  std::vector<int> ordered(selected);
  std::sort(ordered.begin(), ordered.end());
  if (std::adjacent_find(ordered.begin(), ordered.end()) != ordered.end()) {
    throw ContractViolationError("commit_step: duplicate selected position");
  }
  for (int pos : ordered) {
    const auto it = std::lower_bound(z.masked_positions.begin(),
                                     z.masked_positions.end(), pos);
    if (it == z.masked_positions.end() || *it != pos) {
      throw ContractViolationError(
          "commit_step: selected position is already committed");
    }
    const int block_index = static_cast<int>(it - z.masked_positions.begin());
    next.tokens[pos] = sample_categorical(q_block[block_index], rng.next_double());
  }
  next.masked_positions.reserve(z.masked_positions.size() - ordered.size());
  for (int pos : z.masked_positions) {
    if (!std::binary_search(ordered.begin(), ordered.end(), pos)) {
      next.masked_positions.push_back(pos);
    }
  }
  return next;
}

SequenceState generate_unguided(const Denoiser& denoiser, const Vocabulary& vocab,
                                int length, int steps, int k_per_step, double tau,
                                bool eos_deprioritize, const Rng& trajectory_rng) {
  if (steps * k_per_step != length) {
    throw InvalidParameterError(
        "generate_unguided: steps * k_per_step must equal length");
  }
  SequenceState z = SequenceState::all_masked(length, vocab.mask_id(), steps);
  for (int t = steps; t >= 1; --t) {
    const LogitBlock logits = denoiser.predict(z);
    std::vector<std::vector<double>> q_block;
    q_block.reserve(logits.rows.size());
    for (const auto& row : logits.rows) q_block.push_back(softmax_temp(row, tau));
    const std::vector<int> picked =
        select_unmask_set(q_block, k_per_step, eos_deprioritize, vocab.eos_id);
    std::vector<int> positions;
    positions.reserve(picked.size());
    for (int idx : picked) positions.push_back(z.masked_positions[idx]);
    Rng commit_rng =
        trajectory_rng.derive(kStreamTimestep, static_cast<std::uint64_t>(t))
            .derive(kStreamCommit, 0);
    z = commit_step(z, q_block, positions, commit_rng);
  }
  return z;
}

std::vector<std::vector<int>> read_corpus(std::istream& in) {
  std::vector<std::vector<int>> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<int> seq;
    int token;
    while (row >> token) seq.push_back(token);
    if (!seq.empty()) corpus.push_back(std::move(seq));
  }
  return corpus;
}

void write_corpus(std::ostream& out, const std::vector<std::vector<int>>& corpus) {
  for (const auto& seq : corpus) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out << (i ? " " : "") << seq[i];
    }
    out << "\n";
  }
}

}  // namespace entrgi
