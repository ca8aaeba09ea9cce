// SPDX-License-Identifier: Apache-2.0
#include "entrgi/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "entrgi/core_math.hpp"
#include "entrgi/errors.hpp"
#include "entrgi/text_io.hpp"

namespace entrgi {

double approx_error(double weight, std::span<const double> e_hard,
                    std::span<const double> e_soft) {
  if (e_hard.size() != e_soft.size()) {
    throw InvalidInputError("approx_error: dimension mismatch");
  }
  return weight * euclidean_distance(e_hard, e_soft);
}

double align_error(std::span<const double> e_hat, const EmbeddingTable& table) {
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < table.vocab_k(); ++t) {
    best = std::min(best, squared_distance(e_hat, table.row(t)));
  }
  return std::sqrt(best);
}

VarianceIdentityResult variance_identity_check(std::span<const double> q,
                                               const EmbeddingTable& table,
                                               int n_samples, Rng& rng) {
  if (n_samples < 1) {
    throw InvalidParameterError("variance_identity_check: n_samples must be >= 1");
  }
  const std::vector<double> e_soft = soft_embedding(q, table);
  VarianceIdentityResult result;
  for (int t = 0; t < table.vocab_k(); ++t) {
    result.analytic += q[t] * squared_distance(table.row(t), e_soft);
  }
  double total = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const int token = sample_categorical(q, rng.next_double());
    total += squared_distance(table.row(token), e_soft);
  }
  result.empirical = total / n_samples;
  const double scale = std::max(std::abs(result.analytic), 1e-300);
  result.rel_gap = std::abs(result.empirical - result.analytic) / scale;
  return result;
}

namespace {

TimeseriesRow finish_row(int t, int j, double sum_entropy, double sum_approx,
                         double sum_align, double sum_reward, long long positions,
                         long long records) {
  TimeseriesRow row;
  row.timestep = t;
  row.inner_iteration = j;
  row.masked_count = positions;
  row.record_count = records;
  if (positions > 0) {
    row.mean_entropy = sum_entropy / positions;
    row.mean_approx_error = sum_approx / positions;
    row.mean_align_error = sum_align / positions;
  }
  if (records > 0) row.reward = sum_reward / records;
  return row;
}

}  // namespace

std::vector<TimeseriesRow> aggregate_timeseries(
    const std::vector<StepTelemetry>& records) {
  // Final inner iteration per timestep.
  std::map<int, int> final_j;
  for (const auto& rec : records) {
    auto [it, inserted] = final_j.emplace(rec.timestep, rec.inner_iteration);
    if (!inserted) it->second = std::max(it->second, rec.inner_iteration);
  }
  StepAccumulator acc;
  for (const auto& rec : records) {
    if (rec.inner_iteration == final_j.at(rec.timestep)) acc.add(rec);
  }
  return acc.rows();
}

HeatmapGrid heatmap_bin(const std::vector<StepTelemetry>& records,
                        std::span<const double> entropy_edges,
                        std::span<const double> error_edges) {
  auto validate = [](std::span<const double> edges, const char* axis) {
    if (edges.size() < 2) {
      throw InvalidParameterError(std::string("heatmap_bin: need at least one ") +
                                  axis + " bin");
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
      if (!(edges[i] > edges[i - 1])) {
        throw InvalidParameterError(std::string("heatmap_bin: ") + axis +
                                    " edges must be strictly increasing");
      }
    }
  };
  validate(entropy_edges, "entropy");
  validate(error_edges, "error");

  HeatmapAccumulator acc(
      std::vector<double>(entropy_edges.begin(), entropy_edges.end()),
      std::vector<double>(error_edges.begin(), error_edges.end()));
  for (const auto& rec : records) acc.add(rec);
  return acc.grid();
}

std::vector<double> uniform_edges(double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) {
    throw InvalidParameterError("uniform_edges: need bins >= 1 and hi > lo");
  }
  std::vector<double> edges(bins + 1);
  for (int i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  }
  return edges;
}

void StepAccumulator::add(const StepTelemetry& record) {
  Cell& cell = cells_[{record.timestep, record.inner_iteration}];
  for (std::size_t i = 0; i < record.entropy.size(); ++i) {
    cell.sum_entropy += record.entropy[i];
    cell.sum_approx += record.approx_error[i];
    cell.sum_align += record.align_error[i];
  }
  cell.positions += static_cast<long long>(record.entropy.size());
  cell.sum_reward += record.reward;
  cell.records += 1;
}

void StepAccumulator::merge(const StepAccumulator& other) {
  for (const auto& [key, cell] : other.cells_) {
    Cell& mine = cells_[key];
    mine.sum_entropy += cell.sum_entropy;
    mine.sum_approx += cell.sum_approx;
    mine.sum_align += cell.sum_align;
    mine.sum_reward += cell.sum_reward;
    mine.positions += cell.positions;
    mine.records += cell.records;
  }
}

std::vector<TimeseriesRow> StepAccumulator::rows() const {
  std::vector<TimeseriesRow> rows;
  rows.reserve(cells_.size());
  for (const auto& [key, cell] : cells_) {
    rows.push_back(finish_row(key.first, key.second, cell.sum_entropy,
                              cell.sum_approx, cell.sum_align, cell.sum_reward,
                              cell.positions, cell.records));
  }
  // Generation order: descending timestep, ascending inner iteration.
  std::sort(rows.begin(), rows.end(), [](const TimeseriesRow& a,
                                         const TimeseriesRow& b) {
    if (a.timestep != b.timestep) return a.timestep > b.timestep;
    return a.inner_iteration < b.inner_iteration;
  });
  return rows;
}

HeatmapAccumulator::HeatmapAccumulator(std::vector<double> entropy_edges,
                                       std::vector<double> error_edges) {
  grid_.entropy_edges = std::move(entropy_edges);
  grid_.error_edges = std::move(error_edges);
  grid_.counts.assign(
      static_cast<std::size_t>(grid_.entropy_bins()) * grid_.error_bins(), 0);
}

namespace {

int clamped_bin(std::span<const double> edges, double value) {
  const int bins = static_cast<int>(edges.size()) - 1;
  if (value < edges.front()) return 0;
  if (value >= edges.back()) return bins - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), value);
  return std::clamp(static_cast<int>(it - edges.begin()) - 1, 0, bins - 1);
}

}  // namespace

void HeatmapAccumulator::add(const StepTelemetry& record) {
  for (std::size_t i = 0; i < record.entropy.size(); ++i) {
    const int eb = clamped_bin(grid_.entropy_edges, record.entropy[i]);
    const int rb = clamped_bin(grid_.error_edges, record.approx_error[i]);
    ++grid_.at(eb, rb);
    ++grid_.total;
  }
}

void HeatmapAccumulator::merge(const HeatmapAccumulator& other) {
  if (other.grid_.counts.empty()) return;
  if (grid_.counts.empty()) {
    grid_ = other.grid_;
    return;
  }
  if (grid_.counts.size() != other.grid_.counts.size()) {
    throw ContractViolationError("HeatmapAccumulator: merging different grids");
  }
  for (std::size_t i = 0; i < grid_.counts.size(); ++i) {
    grid_.counts[i] += other.grid_.counts[i];
  }
  grid_.total += other.grid_.total;
}

HeatmapGrid HeatmapAccumulator::grid() const { return grid_; }

void write_steps_csv(std::ostream& out, const std::vector<TimeseriesRow>& rows) {
  out << "t,j,mean_entropy,mean_approx_error,mean_align_error,masked_count,reward\n";
  for (const auto& row : rows) {
    out << row.timestep << "," << row.inner_iteration << ","
        << format_double(row.mean_entropy) << ","
        << format_double(row.mean_approx_error) << ","
        << format_double(row.mean_align_error) << "," << row.masked_count << ","
        << format_double(row.reward) << "\n";
  }
}

void write_heatmap_csv(std::ostream& out, const HeatmapGrid& grid) {
  out << "entropy_bin_lo,error_bin_lo,count\n";
  for (int eb = 0; eb < grid.entropy_bins(); ++eb) {
    for (int rb = 0; rb < grid.error_bins(); ++rb) {
      const long long count = grid.at(eb, rb);
      if (count == 0) continue;
      out << format_double(grid.entropy_edges[eb]) << ","
          << format_double(grid.error_edges[rb]) << "," << count << "\n";
    }
  }
}

}  // namespace entrgi
