#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include "ssmiss/config.hpp"

namespace ssmiss {

/// One estimate of one parameter. Complete-data fits carry mechanism
/// "Complete" and rate 0.
struct FitRecord {
  int cell = 0;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  std::string mechanism;
  double rate = 0.0;
  int replication = 0;
  std::string method;
  std::string parameter;
  double truth = 0.0;
  double estimate = 0.0;  // NaN for failures
  double se = 0.0;        // NaN when unavailable
  bool converged = false;
  std::string error;      // non-empty for failure records
  double wall_time = 0.0; // seconds for the whole method run; not persisted
                          // with the records

  bool operator==(const FitRecord&) const = default;
};

inline constexpr const char* kCompleteMechanism = "Complete";

/// Intercepts of the logistic mechanisms, keyed by (cell, mechanism, rate
/// index). Empty when calibration is off.
using CalibrationTable = std::map<std::tuple<int, Mechanism, int>, MissingnessSpec>;

CalibrationTable calibrate_study(const StudyConfig& config, const std::vector<int>& cells);

/// Missingness specification applied for one (cell, mechanism, rate).
MissingnessSpec study_spec(const StudyConfig& config, const CalibrationTable& table,
                           int cell, Mechanism mechanism, int rate_index);

/// Every record of one (cell, replication) work item, in a fixed order:
/// the complete fit, then mechanisms x rates x methods as configured.
std::vector<FitRecord> run_replication(const StudyConfig& config,
                                       const CalibrationTable& calibration, int cell,
                                       int replication);

struct RunOptions {
  std::vector<int> cells;           // empty: every cell
  std::optional<int> replications;  // overrides the config
  bool resume = false;
  std::function<void(const std::string&)> log;
};

struct RunSummary {
  int items_total = 0;
  int items_run = 0;
  int items_skipped = 0;
  int failure_records = 0;
  std::filesystem::path records_path;
};

/// Runs the grid over a worker pool and writes, under output_dir:
///   records.ndjson   one FitRecord per line, in (cell, replication) order
///   timings.ndjson   wall time per (cell, replication, dataset, method)
///   checkpoint.txt   completed (cell, replication) items
///   config.yaml      the effective configuration
/// With resume, completed items are kept and only the rest are run.
RunSummary run_study(const StudyConfig& config, const RunOptions& options = {});

/// Parses "0,3,5-7" into cell indices.
std::vector<int> parse_cell_filter(const std::string& text, int cell_count);

std::string record_to_json(const FitRecord& record);
FitRecord record_from_json(const std::string& line);
std::vector<FitRecord> read_records(const std::filesystem::path& path);

}  // namespace ssmiss
