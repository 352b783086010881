#pragma once

// SVG charts and a markdown summary from metrics CSVs and EMD summaries.
// Output depends only on the inputs (no timestamps), so identical inputs
// give identical bytes.

#include <functional>
#include <string>
#include <vector>

#include "relcap/trainer.hpp"

namespace relcap::report {

struct Run {
  std::string id;
  std::vector<EpochMetrics> rows;
};

struct EmdSummary {
  std::string id;
  double caa = 0.0;     // NaN when the run has no CAA arm
  double no_caa = 0.0;
};

// One polyline per run over consecutive epochs (phase 2 continues phase 1);
// NaN values break the line.
std::string line_chart(const std::string& title, const std::string& y_label, const std::vector<Run>& runs,
                       const std::function<double(const EpochMetrics&)>& value);
// Grouped bars, w/o CAA then w CAA per run.
std::string emd_bars(const std::vector<EmdSummary>& emds);
std::string summary_markdown(const std::vector<Run>& runs, const std::vector<EmdSummary>& emds);

}  // namespace relcap::report
