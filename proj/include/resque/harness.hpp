#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "resque/config.hpp"
#include "resque/trainer.hpp"

namespace resque {

/// Identity of one run. `key()` is unique per record and is the resumability key;
/// `group_key()` drops the seed so runs can be averaged per cell.
struct CellId {
  std::string suite;  // "dist" or "task"
  std::string noise;  // dist only
  int level = 0;      // dist only
  std::string original, target;  // task only
  double cutoff = 0.0;
  std::uint64_t seed = 0;
  std::string run;  // "retrain", "scratch" or "peak"

  std::string key() const;
  std::string group_key() const;
};

struct RunRecord {
  CellId cell;
  std::string index_kind;  // "resque_dist" or "resque_task"
  double index = 0.0;      // NaN when the index itself could not be computed
  bool completed = false;
  std::optional<RetrainMeasures> measures;  // present iff completed
  std::string error;
};

nlohmann::json to_json(const RetrainMeasures& m);
RetrainMeasures measures_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

/// One JSON object per line. Blank lines are ignored; a malformed line throws ParameterError.
std::vector<RunRecord> read_records(const std::filesystem::path& path);

using RecordSink = std::function<void(const RunRecord&)>;

/// Appends records to a JSONL file, one flushed line per record, serialized by a mutex.
class JsonlRecordWriter {
 public:
  explicit JsonlRecordWriter(const std::filesystem::path& path);
  ~JsonlRecordWriter();
  JsonlRecordWriter(const JsonlRecordWriter&) = delete;
  JsonlRecordWriter& operator=(const JsonlRecordWriter&) = delete;

  void write(const RunRecord& record);

 private:
  struct Impl;
  Impl* impl_;
};

struct SuiteSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
};

/// For every (noise, seed): train the original model on the original split to
/// the train cutoff (shared per seed), compute RESQUE_dist between the clean
/// original split and the corrupted shifted split, then retrain to each cutoff
/// and optionally train from scratch. Records whose key is in `done` are skipped.
SuiteSummary run_distribution_suite(const ExperimentConfig& config, const RecordSink& sink,
                                    const std::set<std::string>& done = {});

/// For every (original, target, seed) pair: RESQUE_task of the trained original
/// model on the target, then retraining to each cutoff (measures mode) or for
/// a fixed number of epochs (peak mode).
SuiteSummary run_task_suite(const ExperimentConfig& config, const RecordSink& sink,
                            const std::set<std::string>& done = {});

enum class SuiteKind { dist, task };

/// Runs a suite appending to `records_path`, skipping cells already recorded there.
SuiteSummary run_suite_to_file(const ExperimentConfig& config, SuiteKind kind,
                               const std::filesystem::path& records_path);

}  // namespace resque
