// SPDX-License-Identifier: Apache-2.0
#include "entrgi/reward.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "entrgi/core_math.hpp"
#include "entrgi/errors.hpp"
#include "entrgi/text_io.hpp"

namespace entrgi {

EmbeddingTable::EmbeddingTable(int vocab_k, int dim, std::vector<double> rows,
                               std::uint64_t seed, bool unit_norm)
    : vocab_k_(vocab_k), dim_(dim), seed_(seed), unit_norm_(unit_norm),
      rows_(std::move(rows)) {
  if (vocab_k_ < 2) {
    throw InvalidParameterError("EmbeddingTable: need at least 2 tokens");
  }
  if (dim_ < 1) {
    throw InvalidParameterError("EmbeddingTable: dim must be >= 1");
  }
  if (rows_.size() != static_cast<std::size_t>(vocab_k_) * dim_) {
    throw InvalidInputError("EmbeddingTable: row data size mismatch");
  }
  for (double v : rows_) {
    if (!std::isfinite(v)) {
      throw InvalidInputError("EmbeddingTable: non-finite row entry");
    }
  }
  double min_gap = std::numeric_limits<double>::infinity();
  for (int a = 0; a < vocab_k_; ++a) {
    for (int b = a + 1; b < vocab_k_; ++b) {
      const double gap = euclidean_distance(row(a), row(b));
      min_gap = std::min(min_gap, gap);
      max_row_gap_ = std::max(max_row_gap_, gap);
    }
  }
  if (!(min_gap > 0.0)) {
    throw InvalidInputError("EmbeddingTable: duplicate rows");
  }
}

void EmbeddingTable::save(std::ostream& out) const {
  out << "embedding-table-v1\n";
  out << "K " << vocab_k_ << " d " << dim_ << " seed " << format_u64(seed_)
      << " unit_norm " << (unit_norm_ ? 1 : 0) << "\n";
  for (int t = 0; t < vocab_k_; ++t) {
    const auto r = row(t);
    for (int i = 0; i < dim_; ++i) {
      out << (i ? " " : "") << format_double(r[i]);
    }
    out << "\n";
  }
}

EmbeddingTable EmbeddingTable::load(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "embedding-table-v1") {
    throw InvalidInputError("embedding table snapshot: bad header: " + header);
  }
  std::string key;
  int k = 0, d = 0, unit = 0;
  std::uint64_t seed = 0;
  in >> key >> k >> key >> d >> key >> seed >> key >> unit;
  if (!in) throw InvalidInputError("embedding table snapshot: bad metadata");
  std::vector<double> rows(static_cast<std::size_t>(k) * d);
  for (double& v : rows) in >> v;
  if (!in) throw InvalidInputError("embedding table snapshot: truncated rows");
  return EmbeddingTable(k, d, std::move(rows), seed, unit != 0);
}

EmbeddingTable build_embedding_table(int vocab_k, int dim, std::uint64_t seed,
                                     bool unit_norm) {
  if (vocab_k < 2) {
    throw InvalidParameterError("build_embedding_table: K must be >= 2");
  }
  if (dim < 1) {
    throw InvalidParameterError("build_embedding_table: d must be >= 1");
  }
  Rng rng(seed);
  std::vector<double> rows(static_cast<std::size_t>(vocab_k) * dim);
  for (double& v : rows) v = rng.next_gaussian();
  if (unit_norm) {
    for (int t = 0; t < vocab_k; ++t) {
      double* r = rows.data() + static_cast<std::size_t>(t) * dim;
      const double n = norm({r, static_cast<std::size_t>(dim)});
      if (n > 0.0) {
        for (int i = 0; i < dim; ++i) r[i] /= n;
      }
    }
  }
  return EmbeddingTable(vocab_k, dim, std::move(rows), seed, unit_norm);
}

QuadraticReward::QuadraticReward(EmbeddingSeq targets)
    : targets_(std::move(targets)) {}

double QuadraticReward::value(const EmbeddingSeq& e, const PromptContext&) const {
  if (e.length != targets_.length || e.dim != targets_.dim) {
    throw InvalidInputError("QuadraticReward: input shape mismatch");
  }
  double total = 0.0;
  for (int l = 0; l < e.length; ++l) {
    total += squared_distance(e.row(l), targets_.row(l));
  }
  return -total;
}

EmbeddingSeq QuadraticReward::input_gradient(const EmbeddingSeq& e,
                                             const PromptContext&) const {
  if (e.length != targets_.length || e.dim != targets_.dim) {
    throw InvalidInputError("QuadraticReward: input shape mismatch");
  }
  EmbeddingSeq grad(e.length, e.dim);
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    grad.data[i] = -2.0 * (e.data[i] - targets_.data[i]);
  }
  return grad;
}

PrototypeReward::PrototypeReward(std::vector<double> prototype)
    : prototype_(std::move(prototype)) {
  const double n = norm(prototype_);
  if (!(n > 0.0)) {
    throw InvalidInputError("PrototypeReward: zero prototype");
  }
  for (double& v : prototype_) v /= n;
}

double PrototypeReward::value(const EmbeddingSeq& e, const PromptContext&) const {
  if (e.dim != dim()) throw InvalidInputError("PrototypeReward: dim mismatch");
  double total = 0.0;
  for (int l = 0; l < e.length; ++l) total += dot(e.row(l), prototype_);
  return total / e.length;
}

EmbeddingSeq PrototypeReward::input_gradient(const EmbeddingSeq& e,
                                             const PromptContext&) const {
  if (e.dim != dim()) throw InvalidInputError("PrototypeReward: dim mismatch");
  EmbeddingSeq grad(e.length, e.dim);
  const double scale = 1.0 / e.length;
  for (int l = 0; l < e.length; ++l) {
    auto r = grad.row(l);
    for (int i = 0; i < e.dim; ++i) r[i] = prototype_[i] * scale;
  }
  return grad;
}

MLPReward::MLPReward(int dim, int hidden, std::uint64_t seed)
    : dim_(dim), hidden_(hidden), seed_(seed) {
  if (dim < 1 || hidden < 1) {
    throw InvalidParameterError("MLPReward: dim and hidden must be >= 1");
  }
  Rng rng = Rng(seed).derive(kStreamReward, 0);
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_.resize(static_cast<std::size_t>(hidden) * dim);
  for (double& v : w1_) v = rng.next_gaussian() * w1_scale;
  b1_.resize(hidden);
  for (double& v : b1_) v = rng.next_gaussian() * 0.1;
  w2_.resize(hidden);
  for (double& v : w2_) v = rng.next_gaussian() * w2_scale;
  b2_ = rng.next_gaussian() * 0.1;
}

std::vector<double> MLPReward::hidden_activations(const EmbeddingSeq& e,
                                                  std::vector<double>* pooled) const {
  std::vector<double> mean(dim_, 0.0);
  for (int l = 0; l < e.length; ++l) {
    const auto r = e.row(l);
    for (int i = 0; i < dim_; ++i) mean[i] += r[i];
  }
  for (double& v : mean) v /= e.length;
  std::vector<double> h(hidden_);
  for (int j = 0; j < hidden_; ++j) {
    double pre = b1_[j];
    const double* wrow = w1_.data() + static_cast<std::size_t>(j) * dim_;
    for (int i = 0; i < dim_; ++i) pre += wrow[i] * mean[i];
    h[j] = std::tanh(pre);
  }
  if (pooled) *pooled = std::move(mean);
  return h;
}

double MLPReward::value(const EmbeddingSeq& e, const PromptContext&) const {
  if (e.dim != dim_) throw InvalidInputError("MLPReward: dim mismatch");
  const std::vector<double> h = hidden_activations(e, nullptr);
  return dot(h, w2_) + b2_;
}

EmbeddingSeq MLPReward::input_gradient(const EmbeddingSeq& e,
                                       const PromptContext&) const {
  if (e.dim != dim_) throw InvalidInputError("MLPReward: dim mismatch");
  const std::vector<double> h = hidden_activations(e, nullptr);
  // dR/dmean = W1^T (w2 * (1 - h^2)); every position sees dR/dmean / L.
  std::vector<double> grad_mean(dim_, 0.0);
  for (int j = 0; j < hidden_; ++j) {
    const double back = w2_[j] * (1.0 - h[j] * h[j]);
    const double* wrow = w1_.data() + static_cast<std::size_t>(j) * dim_;
    for (int i = 0; i < dim_; ++i) grad_mean[i] += back * wrow[i];
  }
  EmbeddingSeq grad(e.length, e.dim);
  const double scale = 1.0 / e.length;
  for (int l = 0; l < e.length; ++l) {
    auto r = grad.row(l);
    for (int i = 0; i < dim_; ++i) r[i] = grad_mean[i] * scale;
  }
  return grad;
}

void MLPReward::save(std::ostream& out) const {
  out << "mlp-reward-v1\n";
  out << "d " << dim_ << " hidden " << hidden_ << " seed " << format_u64(seed_)
      << "\n";
  auto dump = [&out](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out << (i ? " " : "") << format_double(v[i]);
    }
    out << "\n";
  };
  dump(w1_);
  dump(b1_);
  dump(w2_);
  out << format_double(b2_) << "\n";
}

MLPReward MLPReward::load(std::istream& in) {
  std::string header;
  std::getline(in, header);
  if (header != "mlp-reward-v1") {
    throw InvalidInputError("mlp snapshot: bad header: " + header);
  }
  std::string key;
  MLPReward model;
  in >> key >> model.dim_ >> key >> model.hidden_ >> key >> model.seed_;
  if (!in) throw InvalidInputError("mlp snapshot: bad metadata");
  model.w1_.resize(static_cast<std::size_t>(model.hidden_) * model.dim_);
  model.b1_.resize(model.hidden_);
  model.w2_.resize(model.hidden_);
  for (double& v : model.w1_) in >> v;
  for (double& v : model.b1_) in >> v;
  for (double& v : model.w2_) in >> v;
  in >> model.b2_;
  if (!in) throw InvalidInputError("mlp snapshot: truncated parameters");
  return model;
}

std::vector<double> soft_embedding(std::span<const double> q,
                                   const EmbeddingTable& table) {
  if (static_cast<int>(q.size()) != table.vocab_k()) {
    throw InvalidInputError("soft_embedding: q size != table rows");
  }
  std::vector<double> out(table.dim(), 0.0);
  for (int t = 0; t < table.vocab_k(); ++t) {
    const double w = q[t];
    if (w == 0.0) continue;
    const auto r = table.row(t);
    for (int i = 0; i < table.dim(); ++i) out[i] += w * r[i];
  }
  return out;
}

double score_discrete(const std::vector<int>& tokens, const EmbeddingTable& table,
                      const RewardModel& model, const PromptContext& ctx) {
  EmbeddingSeq e(static_cast<int>(tokens.size()), table.dim());
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    if (tokens[l] < 0 || tokens[l] >= table.vocab_k()) {
      throw InvalidInputError("score_discrete: token outside vocabulary "
                              "(mask tokens are not scoreable)");
    }
    const auto r = table.row(tokens[l]);
    std::copy(r.begin(), r.end(), e.row(static_cast<int>(l)).begin());
  }
  return model.value(e, ctx);
}

GradientCheckReport check_reward_gradient(const RewardModel& model, int length,
                                          int trials, std::uint64_t seed) {
  if (trials < 1) {
    throw InvalidParameterError("check_reward_gradient: trials must be >= 1");
  }
  GradientCheckReport report;
  report.trials = trials;
  Rng root(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.derive(kStreamReward, static_cast<std::uint64_t>(trial));
    EmbeddingSeq e(length, model.dim());
    for (double& v : e.data) v = rng.next_gaussian();
    PromptContext ctx;
    const EmbeddingSeq analytic = model.input_gradient(e, ctx);
    const auto f = [&](std::span<const double> flat) {
      EmbeddingSeq probe(length, model.dim());
      probe.data.assign(flat.begin(), flat.end());
      return model.value(probe, ctx);
    };
    const std::vector<double> numeric = finite_diff_grad(f, e.data, 1e-4);
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double d = analytic.data[i] - numeric[i];
      diff += d * d;
      ref += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_trial = trial;
    }
  }
  return report;
}

}  // namespace entrgi
