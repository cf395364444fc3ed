#include "tucknet/metrics.hpp"

#include <cmath>
#include <sstream>

namespace tucknet {

std::int64_t count_layerwise(const GroupLayout& layout) {
  layout.validate();
  std::int64_t per_layer = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    per_layer += static_cast<std::int64_t>(layout.dims[k]) * layout.ranks[k];
  }
  return static_cast<std::int64_t>(layout.num_layers()) * per_layer;
}

std::int64_t count_linear(const GroupLayout& layout) {
  layout.validate();
  if (layout.dims[0] != layout.dims[1]) {
    throw ValueError("count_linear requires equal input and output channel counts");
  }
  const std::int64_t dc = layout.dims[0];
  return static_cast<std::int64_t>(layout.num_layers()) * dc * dc;
}

std::int64_t count_grouped(const GroupLayout& layout) {
  layout.validate();
  std::int64_t n = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    n += static_cast<std::int64_t>(layout.dims[k]) * layout.ranks[k];
  }
  return n;
}

ParamReport parameter_report(const std::vector<GroupLayout>& layouts) {
  ParamReport report;
  for (const auto& layout : layouts) {
    SchemeCounts counts{count_layerwise(layout), count_linear(layout), count_grouped(layout)};
    report.totals.layerwise += counts.layerwise;
    report.totals.linear += counts.linear;
    report.totals.grouped += counts.grouped;
    report.per_group.push_back(counts);
  }
  if (report.totals.grouped > 0) {
    report.layerwise_over_grouped =
        static_cast<double>(report.totals.layerwise) / static_cast<double>(report.totals.grouped);
    report.ratio_rounded = std::llround(report.layerwise_over_grouped);
  }
  return report;
}

std::vector<GroupLayout> default_resnet26_layouts() {
  std::vector<GroupLayout> layouts;
  for (Index c : {64, 128, 256}) {
    layouts.push_back(GroupLayout::full_rank({c, c, 3, 3, 2, 4}));
  }
  return layouts;
}

std::vector<GroupLayout> default_resnet26_accounting_layouts() {
  std::vector<GroupLayout> layouts = default_resnet26_layouts();
  for (auto& layout : layouts) {
    for (std::size_t k = 2; k < 6; ++k) layout.ranks[k] = 1;
  }
  return layouts;
}

PublishedCounts published_resnet26_counts() {
  PublishedCounts out;
  for (const auto& layout : default_resnet26_layouts()) {
    out.layerwise += count_layerwise(layout);
    out.linear += count_linear(layout);
    out.grouped_full_rank += count_grouped(layout);
  }
  for (const auto& layout : default_resnet26_accounting_layouts()) {
    out.grouped += count_grouped(layout);
  }
  out.layerwise_over_grouped = static_cast<double>(out.layerwise) / static_cast<double>(out.grouped);
  out.ratio_rounded = std::llround(out.layerwise_over_grouped);
  return out;
}

double TaskScoreConfig::beta() const {
  const double ref = reference_error();
  if (ref <= 0.0) throw ValueError("score config: baseline error must be positive");
  if (exponent <= 0.0) throw ValueError("score config: exponent must be positive");
  return 1000.0 / std::pow(ref, exponent);
}

ScoreBreakdown decathlon_score(const std::map<std::string, double>& errors,
                               const ScoreConfig& config) {
  ScoreBreakdown out;
  for (const auto& [task, task_cfg] : config.tasks) {
    const auto it = errors.find(task);
    if (it == errors.end()) {
      throw ValueError("decathlon_score: missing error entry for task '" + task + "'");
    }
    const double e = it->second;
    if (e < 0.0 || e > 1.0) {
      std::ostringstream msg;
      msg << "decathlon_score: error " << e << " for task '" << task << "' outside [0,1]";
      throw ValueError(msg.str());
    }
    const double margin = std::max(0.0, task_cfg.reference_error() - e);
    const double points = task_cfg.beta() * std::pow(margin, task_cfg.exponent);
    out.per_task_points[task] = points;
    out.total += points;
  }
  out.total_rounded = round_points(out.total);
  return out;
}

double escore(double score, double relative_params) {
  if (relative_params <= 0.0) {
    throw ValueError("escore: relative parameter count must be positive");
  }
  return score / relative_params;
}

std::int64_t round_points(double value) {
  const double shifted = value >= 0.0 ? std::ceil(value - 0.5) : std::floor(value + 0.5);
  return static_cast<std::int64_t>(shifted);
}

std::vector<CompressionRow> compression_report(
    const std::vector<GroupLayout>& base_layouts,
    const std::vector<std::pair<std::string, std::vector<GroupLayout>>>& truncated) {
  auto totals = [](const std::vector<GroupLayout>& layouts) {
    CompressionRow row;
    for (const auto& layout : layouts) {
      row.core_elements += layout.core_elements();
      row.grouped_params += count_grouped(layout);
    }
    row.model_params = row.core_elements + row.grouped_params;
    return row;
  };

  const CompressionRow base = totals(base_layouts);
  std::vector<CompressionRow> rows;
  CompressionRow base_row = base;
  base_row.label = "full-rank";
  rows.push_back(base_row);

  for (const auto& [label, layouts] : truncated) {
    if (layouts.size() != base_layouts.size()) {
      throw ValueError("compression_report: truncated layout count mismatch");
    }
    for (std::size_t g = 0; g < layouts.size(); ++g) {
      if (layouts[g].dims != base_layouts[g].dims) {
        throw ValueError("compression_report: truncation must keep the base dims");
      }
      layouts[g].validate();
    }
    CompressionRow row = totals(layouts);
    row.label = label;
    row.core_ratio = static_cast<double>(base.core_elements) / static_cast<double>(row.core_elements);
    row.model_ratio = static_cast<double>(base.model_params) / static_cast<double>(row.model_params);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tucknet
