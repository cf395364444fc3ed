#pragma once

// Closed-form parameter accounting for the three weight-sharing schemes,
// challenge scoring, and compression reporting.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tucknet/tucker.hpp"

namespace tucknet {

/// Per-task parameters when every layer carries its own Tucker factors:
/// (D4*D5) * sum_{k=0..3} Dk*Rk.
std::int64_t count_layerwise(const GroupLayout& layout);

/// Per-task parameters of a per-layer linear recombination (requires
/// D0 == D1): (D4*D5) * Dc^2.
std::int64_t count_linear(const GroupLayout& layout);

/// Per-task parameters of the grouped 6th-order parametrization:
/// sum_{k=0..5} Dk*Rk.
std::int64_t count_grouped(const GroupLayout& layout);

struct SchemeCounts {
  std::int64_t layerwise = 0;
  std::int64_t linear = 0;
  std::int64_t grouped = 0;
};

struct ParamReport {
  std::vector<SchemeCounts> per_group;
  SchemeCounts totals;
  double layerwise_over_grouped = 0.0;
  std::int64_t ratio_rounded = 0;
};

ParamReport parameter_report(const std::vector<GroupLayout>& layouts);

/// The three default ResNet-26 macro-module layouts at full rank
/// (channels 64/128/256, 3x3 kernels, 2 blocks per unit, 4 units).
std::vector<GroupLayout> default_resnet26_layouts();

/// The same layouts with the published task-parameter accounting: full-rank
/// factors on the two channel modes, rank-1 factors on the four structural
/// modes. Summing count_grouped over these reproduces the published grouped
/// total (172,068) alongside the full-rank layerwise total (1,376,688).
std::vector<GroupLayout> default_resnet26_accounting_layouts();

/// Published accounting for the default architecture: layerwise and linear
/// totals at full rank, the grouped total under the accounting layouts, and
/// their ratio (~L).
struct PublishedCounts {
  std::int64_t layerwise = 0;
  std::int64_t linear = 0;
  std::int64_t grouped = 0;
  std::int64_t grouped_full_rank = 0;
  double layerwise_over_grouped = 0.0;
  std::int64_t ratio_rounded = 0;
};
PublishedCounts published_resnet26_counts();

// --- Challenge scoring -------------------------------------------------------

struct TaskScoreConfig {
  double baseline_error = 0.0;  // E_baseline; reference is 2x this
  double exponent = 2.0;        // lambda_t
  double reference_error() const { return 2.0 * baseline_error; }
  // beta_t such that beta * reference^lambda == 1000 (max points per task)
  double beta() const;
};

struct ScoreConfig {
  std::map<std::string, TaskScoreConfig> tasks;
};

struct ScoreBreakdown {
  std::map<std::string, double> per_task_points;
  double total = 0.0;
  std::int64_t total_rounded = 0;
};

/// S = sum_t beta_t * max{0, E_ref,t - E_t}^lambda_t, capped at 1000 points
/// per task by the beta normalization.
ScoreBreakdown decathlon_score(const std::map<std::string, double>& errors,
                               const ScoreConfig& config);

/// Score divided by the relative parameter budget (in multiples of the base
/// network).
double escore(double score, double relative_params);

/// Rounding used for published point totals: nearest integer, ties toward
/// zero (3585/1.35 -> 2656, 2851/2 -> 1425).
std::int64_t round_points(double value);

// --- Compression reporting ---------------------------------------------------

struct CompressionRow {
  std::string label;
  std::int64_t core_elements = 0;
  std::int64_t grouped_params = 0;
  std::int64_t model_params = 0;  // cores + per-task factors across groups
  double core_ratio = 1.0;
  double model_ratio = 1.0;
};

/// Ratios of the full-rank layouts' sizes to each truncated variant's sizes.
/// Rows are keyed by caller-provided labels.
std::vector<CompressionRow> compression_report(
    const std::vector<GroupLayout>& base_layouts,
    const std::vector<std::pair<std::string, std::vector<GroupLayout>>>& truncated);

}  // namespace tucknet
