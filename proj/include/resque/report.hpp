#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resque/harness.hpp"
#include "resque/stats.hpp"

namespace resque {

enum class ReportMode { dist, task };

std::string_view to_string(ReportMode mode) noexcept;
ReportMode parse_report_mode(std::string_view name);

/// Measures correlated against the index, in table order. `peak_accuracy` is
/// only reported for peak-mode records.
const std::vector<std::string>& report_measures();

/// One point: a cell averaged over its seeds, or a single run when not averaging.
struct SeriesPoint {
  std::string cell;  // group key, or record key for raw runs
  CellId id;         // seed is meaningless for averaged points
  std::size_t runs = 0;
  double index = 0.0;
  std::map<std::string, double> measures;
};

struct CorrelationRow {
  double cutoff = 0.0;
  std::string run;
  std::string measure;
  std::size_t n = 0;
  std::optional<CorrelationResult> pearson;   // empty when the measure is constant
  std::optional<CorrelationResult> spearman;
};

struct ScratchComparison {
  std::string cell;
  double cutoff = 0.0;
  double index = 0.0;
  double retrain_epochs = 0.0;
  double scratch_epochs = 0.0;
  double retrain_grad_norm = 0.0;
  double scratch_grad_norm = 0.0;
};

struct Report {
  ReportMode mode = ReportMode::dist;
  std::vector<SeriesPoint> series;
  std::vector<CorrelationRow> correlations;
  std::vector<ScratchComparison> scratch;

  /// Row for (cutoff, run, measure); throws ParameterError when absent.
  const CorrelationRow& row(double cutoff, const std::string& run, const std::string& measure) const;
};

/// Pure function of the records. Throws UnderpoweredError, listing each
/// (cutoff, run) group with fewer than 3 points, when any group is short or
/// there are no completed records of the mode's suite.
Report build_report(const std::vector<RunRecord>& records, ReportMode mode, bool average_seeds = true);

/// Writes correlations.csv, series.csv and scratch_vs_retrain.csv into `dir`.
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace resque
