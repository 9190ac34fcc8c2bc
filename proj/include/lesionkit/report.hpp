#pragma once

#include "lesionkit/metrics.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lesionkit {

struct ModelResult {
  std::string model;
  std::int64_t parameters = 0;
  MetricReport report;
};

/// 0.964 -> "96.4%".
std::string format_percent(double fraction);
/// 88'000'000 -> "88.0M".
std::string format_parameters(std::int64_t count);

/// Model, Parameters, Accuracy, Precision, Recall, F1 (weighted variants).
std::string render_comparison_table(const std::vector<ModelResult>& results);
std::string render_comparison_csv(const std::vector<ModelResult>& results);

/// Row-normalised confusion matrix as an SVG heatmap, one labelled cell per
/// entry.
std::string render_heatmap_svg(const MetricReport& report, const std::string& title);

struct RenderedReport {
  std::string table;
  std::string csv;
  std::vector<std::pair<std::string, std::string>> heatmaps;  // model, svg
};

/// Throws std::invalid_argument when `results` is empty.
RenderedReport render_report(const std::vector<ModelResult>& results);

}  // namespace lesionkit
