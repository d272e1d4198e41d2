#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "resque/clustering.hpp"
#include "resque/datasets.hpp"
#include "resque/model.hpp"
#include "resque/shifts.hpp"
#include "resque/trainer.hpp"

namespace resque {

/// A synthetic task: generator seed, class count and pattern family; other
/// generator settings come from the dataset section.
struct TaskSpec {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t num_classes = 5;
  Pattern pattern = Pattern::gratings;
};

enum class TaskMode { measures, peak };

struct TaskRoster {
  std::vector<TaskSpec> tasks;
  std::vector<std::pair<std::string, std::string>> pairs;  // (original, target) by task name
  TaskMode mode = TaskMode::measures;
  int peak_epochs = 20;
  InitScheme init_scheme = InitScheme::labels;

  const TaskSpec& find(const std::string& name) const;
};

struct ExperimentConfig {
  SyntheticSpec dataset;
  SplitSpec split;  // seed is replaced per run
  Arch arch = Arch::convnet;
  std::vector<std::size_t> hidden = {8, 16};
  TrainConfig train;
  std::vector<NoiseSpec> noises;
  TaskRoster tasks;
  std::vector<double> cutoffs;  // retraining cutoffs; empty means {train.cutoff_accuracy}
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  bool scratch = false;
  bool average_seeds = true;
  std::string records_path = "records.jsonl";
  std::string report_dir = "report";
  int parallel = 1;

  ModelSpec model_spec(std::size_t num_classes) const;
  std::vector<double> retrain_cutoffs() const;
  SyntheticSpec task_dataset(const TaskSpec& task) const;
  void validate() const;
};

/// Parses the JSON config schema (see README). Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig parse_train_config(const nlohmann::json& j, TrainConfig base = {});

}  // namespace resque
