#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prunescope/metrics.hpp"

namespace prunescope {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label = "fraction of weights remaining";
  std::string y_label;
  /// Log-scale x axis running from 1 (left) down to the smallest fraction.
  bool log_x_descending = true;
  std::optional<double> y_min;
  std::optional<double> y_max;
  /// Series are drawn as cumulative filled bands in order.
  bool stacked = false;
  int width = 640;
  int height = 400;
};

/// Standalone SVG document.
std::string render_chart(const ChartSpec& spec, const std::vector<Series>& series);

/// All curves of one trial.
struct TrialCurves {
  std::string label;
  std::vector<InterpretabilitySummary> summaries;
  std::vector<ConsistencyReport> consistency;
};

/// fig1_accuracy.svg, fig2_interpretable_units.svg, fig2_unique_concepts.svg,
/// fig3_categories.svg (first trial only) and fig4_consistency.svg; one line per
/// trial and metric.
void write_figures(const std::vector<TrialCurves>& trials, const std::vector<Category>& categories,
                   const std::filesystem::path& out_dir);

}  // namespace prunescope
