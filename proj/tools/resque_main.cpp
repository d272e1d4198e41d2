#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "resque/config.hpp"
#include "resque/datasets.hpp"
#include "resque/errors.hpp"
#include "resque/harness.hpp"
#include "resque/model.hpp"
#include "resque/randindex.hpp"
#include "resque/report.hpp"
#include "resque/representation.hpp"
#include "resque/rng.hpp"
#include "resque/shifts.hpp"
#include "resque/trainer.hpp"

using namespace resque;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalError = 3, kUnderpowered = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> parallel;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Seed (suites: run this single seed)");
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--parallel", c.parallel, "Worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) config.seeds = {*c.seed};
  if (c.parallel) config.parallel = *c.parallel;
  config.validate();
  return config;
}

std::uint64_t seed_or(const Common& c, std::uint64_t fallback) { return c.seed.value_or(fallback); }

std::string require_out(const Common& c, const char* what) {
  if (c.out.empty()) throw ParameterError(std::string("--out is required: ") + what);
  return c.out;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retraining-cost estimation from forward-pass representation statistics"};
  app.require_subcommand(1);

  Common common;
  std::string data_path, model_path, original_path, shifted_path, kind = "gaussian", records_path, mode = "dist";
  std::string init = "labels";
  int level = 1, classes = 0, epochs = 0;
  std::size_t samples_per_class = 0;
  double cutoff = -1.0;
  bool raw = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labeled dataset");
  add_common(gen, common);
  gen->add_option("--classes", classes, "Number of classes");
  gen->add_option("--samples-per-class", samples_per_class, "Samples per class");

  auto* train = app.add_subcommand("train", "Train a fresh model to the cutoff accuracy");
  add_common(train, common);
  train->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);

  auto* shift = app.add_subcommand("shift", "Corrupt a dataset with one noise level");
  add_common(shift, common);
  shift->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  shift->add_option("--kind", kind, "gaussian, blur or salt_pepper");
  shift->add_option("--level", level, "Intensity level 0..10");

  auto* dist = app.add_subcommand("resque-dist", "Index between two datasets under a trained model");
  add_common(dist, common);
  dist->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  dist->add_option("--original", original_path, "Original dataset")->required()->check(CLI::ExistingFile);
  dist->add_option("--shifted", shifted_path, "Shifted dataset")->required()->check(CLI::ExistingFile);

  auto* task = app.add_subcommand("resque-task", "Index of a trained model for a new task");
  add_common(task, common);
  task->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  task->add_option("--data", data_path, "New-task dataset")->required()->check(CLI::ExistingFile);
  task->add_option("--init", init, "labels, kmeanspp or least_entropy");

  auto* retrain = app.add_subcommand("retrain", "Retrain a checkpoint on new data and report the measures");
  add_common(retrain, common);
  retrain->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  retrain->add_option("--data", data_path, "Dataset file")->required()->check(CLI::ExistingFile);
  retrain->add_option("--cutoff", cutoff, "Cutoff accuracy (default from config)");
  retrain->add_option("--epochs", epochs, "Train a fixed number of epochs instead");

  auto* suite_dist = app.add_subcommand("suite-dist", "Run the distribution-shift suite");
  add_common(suite_dist, common);
  auto* suite_task = app.add_subcommand("suite-task", "Run the task-change suite");
  add_common(suite_task, common);

  auto* report = app.add_subcommand("report", "Correlation tables and plot series from a record file");
  add_common(report, common);
  report->add_option("--records", records_path, "Record file (default from config)");
  report->add_option("--mode", mode, "dist or task");
  report->add_flag("--raw", raw, "Correlate individual runs instead of seed averages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const ExperimentConfig config = resolve(common);
    TrainConfig tc = config.train;
    tc.seed = seed_or(common, tc.seed);

    if (gen->parsed()) {
      SyntheticSpec spec = config.dataset;
      if (classes > 0) spec.num_classes = static_cast<std::size_t>(classes);
      if (samples_per_class > 0) spec.samples_per_class = samples_per_class;
      spec.seed = seed_or(common, spec.seed);
      const LabeledDataset ds = generate_synthetic(spec);
      write_dataset(require_out(common, "dataset file"), ds);
      print({{"samples", ds.size()}, {"classes", ds.num_classes}, {"out", common.out}});
    } else if (train->parsed()) {
      const LabeledDataset ds = read_dataset(data_path);
      const ModelParams init_p = init_params(config.model_spec(ds.num_classes), tc.seed);
      TrainOutcome outcome = train_to_cutoff(init_p, ds, tc);
      write_params(require_out(common, "checkpoint"), outcome.params);
      print(to_json(outcome.measures));
    } else if (shift->parsed()) {
      const LabeledDataset ds = read_dataset(data_path);
      write_dataset(require_out(common, "dataset file"),
                    apply_shift(ds, NoiseSpec{parse_noise_kind(kind), level, seed_or(common, 0)}));
    } else if (dist->parsed()) {
      const ModelParams params = read_params(model_path);
      const LabeledDataset a = read_dataset(original_path);
      const LabeledDataset b = read_dataset(shifted_path);
      const std::size_t k = params.spec.num_classes;
      const double index = resque_dist(class_embeddings(extract_embeddings(params, a), k),
                                       class_embeddings(extract_embeddings(params, b), k));
      print({{"resque_dist", index}});
    } else if (task->parsed()) {
      const ModelParams params = read_params(model_path);
      const LabeledDataset ds = read_dataset(data_path);
      const TaskIndexResult r = resque_task_pipeline(params, ds, tc, parse_init_scheme(init));
      print({{"resque_task", r.index},
             {"ari", r.ari},
             {"init_scheme", to_string(r.init_scheme)},
             {"lloyd_iterations", r.lloyd_iterations},
             {"epochs_used", 1},
             {"seed", r.seed}});
    } else if (retrain->parsed()) {
      ModelParams params = read_params(model_path);
      const LabeledDataset ds = read_dataset(data_path);
      if (ds.num_classes != params.spec.num_classes) reset_head(params, ds.num_classes, derive_seed(tc.seed, 8));
      if (cutoff >= 0.0) tc.cutoff_accuracy = cutoff;
      TrainOutcome outcome =
          epochs > 0 ? train_fixed_epochs(std::move(params), ds, tc, epochs) : train_to_cutoff(std::move(params), ds, tc);
      if (!common.out.empty()) write_params(common.out, outcome.params);
      print(to_json(outcome.measures));
    } else if (suite_dist->parsed() || suite_task->parsed()) {
      const std::string path = common.out.empty() ? config.records_path : common.out;
      const SuiteSummary s =
          run_suite_to_file(config, suite_dist->parsed() ? SuiteKind::dist : SuiteKind::task, path);
      print({{"records", path}, {"written", s.written}, {"skipped", s.skipped}, {"failed", s.failed}});
    } else if (report->parsed()) {
      const std::string path = records_path.empty() ? config.records_path : records_path;
      const Report r = build_report(read_records(path), parse_report_mode(mode), config.average_seeds && !raw);
      const std::string dir = common.out.empty() ? config.report_dir : common.out;
      write_report(r, dir);
      for (const auto& row : r.correlations) {
        auto cell = [](const std::optional<CorrelationResult>& c) {
          return c ? json{{"r", c->coefficient}, {"p", c->p_value}} : json(nullptr);
        };
        std::cout << "cutoff=" << row.cutoff << " " << row.run << " " << row.measure << " n=" << row.n
                  << " pearson=" << cell(row.pearson).dump() << " spearman=" << cell(row.spearman).dump() << '\n';
      }
      std::cout << "wrote " << dir << '\n';
    }
    return kOk;
  } catch (const UnderpoweredError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnderpowered;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingClassError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const DegenerateError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.stage() == "validate" ? kConfigError : kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
