// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "entrgi/reward.hpp"
#include "entrgi/rng.hpp"

namespace entrgi {

/// One record per (timestep, inner iteration) of a guided trajectory, with
/// per-masked-position diagnostics. Committed positions do not contribute;
/// masked_count makes the other convention reconstructible downstream.
struct StepTelemetry {
  int timestep = 0;
  int inner_iteration = 0;
  double reward = 0.0;
  int masked_count = 0;
  std::vector<double> entropy;       // H(q^l)
  std::vector<double> weight;        // w^l
  std::vector<double> approx_error;  // w^l * ||e_hard - e_soft||
  std::vector<double> align_error;   // min_k ||e_hat - E[k]||
  std::vector<double> gap;           // ||e_hard - e_soft||
};

/// w * ||e_hard - e_soft||: the distance between the reward input and the
/// soft embedding gradients flow through.
double approx_error(double weight, std::span<const double> e_hard,
                    std::span<const double> e_soft);

/// min over table rows of ||e_hat - row||, brute-forced over all K rows.
double align_error(std::span<const double> e_hat, const EmbeddingTable& table);

struct VarianceIdentityResult {
  double analytic = 0.0;
  double empirical = 0.0;
  double rel_gap = 0.0;
};

/// E||e_hard - e_soft||^2 equals the categorical variance
/// sum_k q_k ||E[k] - e_soft||^2; checks the analytic sum against a
/// Monte-Carlo mean over n_samples draws.
VarianceIdentityResult variance_identity_check(std::span<const double> q,
                                               const EmbeddingTable& table,
                                               int n_samples, Rng& rng);

struct TimeseriesRow {
  int timestep = 0;
  int inner_iteration = 0;
  double mean_entropy = 0.0;
  double mean_approx_error = 0.0;
  double mean_align_error = 0.0;
  long long masked_count = 0;  // total contributing positions
  double reward = 0.0;         // mean over contributing records
  long long record_count = 0;
};

/// Position- and trajectory-averaged series at the final inner iteration of
/// each timestep, ordered by descending timestep (generation order). An
/// empty stream yields an empty series.
std::vector<TimeseriesRow> aggregate_timeseries(
    const std::vector<StepTelemetry>& records);

struct HeatmapGrid {
  std::vector<double> entropy_edges;  // strictly increasing, size bins+1
  std::vector<double> error_edges;
  std::vector<long long> counts;  // row-major [entropy_bin][error_bin]
  long long total = 0;

  int entropy_bins() const { return static_cast<int>(entropy_edges.size()) - 1; }
  int error_bins() const { return static_cast<int>(error_edges.size()) - 1; }
  long long& at(int eb, int rb) {
    return counts[static_cast<std::size_t>(eb) * error_bins() + rb];
  }
  long long at(int eb, int rb) const {
    return counts[static_cast<std::size_t>(eb) * error_bins() + rb];
  }
};

/// 2-D histogram of per-position (entropy, approx_error) pairs. Values
/// outside the edge range clamp into the boundary bins, so the total count
/// always equals the number of contributing (position, record) pairs.
HeatmapGrid heatmap_bin(const std::vector<StepTelemetry>& records,
                        std::span<const double> entropy_edges,
                        std::span<const double> error_edges);

std::vector<double> uniform_edges(double lo, double hi, int bins);

/// Streaming per-(t, j) aggregation; folding records one at a time yields
/// the same rows as batch aggregation over the concatenated stream. Used by
/// the parallel harness, with merges applied in a fixed order.
class StepAccumulator {
 public:
  void add(const StepTelemetry& record);
  void merge(const StepAccumulator& other);

  /// All (t, j) rows, descending t then ascending j.
  std::vector<TimeseriesRow> rows() const;

 private:
  struct Cell {
    double sum_entropy = 0.0;
    double sum_approx = 0.0;
    double sum_align = 0.0;
    double sum_reward = 0.0;
    long long positions = 0;
    long long records = 0;
  };
  std::map<std::pair<int, int>, Cell> cells_;
};

class HeatmapAccumulator {
 public:
  HeatmapAccumulator() = default;
  HeatmapAccumulator(std::vector<double> entropy_edges,
                     std::vector<double> error_edges);

  void add(const StepTelemetry& record);
  void merge(const HeatmapAccumulator& other);
  HeatmapGrid grid() const;

 private:
  HeatmapGrid grid_;
};

/// CSV emitters with fixed headers; numbers use shortest round-trip decimal.
void write_steps_csv(std::ostream& out, const std::vector<TimeseriesRow>& rows);
void write_heatmap_csv(std::ostream& out, const HeatmapGrid& grid);

}  // namespace entrgi
