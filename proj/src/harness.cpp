#include "resque/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "resque/errors.hpp"
#include "resque/randindex.hpp"
#include "resque/representation.hpp"
#include "resque/rng.hpp"

namespace resque {

using nlohmann::json;

namespace {

std::string format_cutoff(double c) {
  std::ostringstream os;
  os.precision(6);
  os << c;
  return os.str();
}

}  // namespace

std::string CellId::group_key() const {
  std::string k = suite + "/";
  if (suite == "dist") {
    k += noise + "/" + std::to_string(level);
  } else {
    k += original + "->" + target;
  }
  return k + "/cutoff=" + format_cutoff(cutoff) + "/" + run;
}

std::string CellId::key() const { return group_key() + "/seed=" + std::to_string(seed); }

json to_json(const RetrainMeasures& m) {
  return json{{"epochs", m.epochs},
              {"total_grad_norm", m.total_grad_norm},
              {"param_change", m.param_change},
              {"wall_clock_s", m.wall_clock_s},
              {"flops_estimate", m.flops_estimate},
              {"reached_cutoff", m.reached_cutoff},
              {"valid", m.valid},
              {"halt", to_string(m.halt)},
              {"steps", m.steps},
              {"peak_accuracy", m.peak_accuracy()},
              {"accuracy_trace", m.accuracy_trace}};
}

RetrainMeasures measures_from_json(const json& j) {
  RetrainMeasures m;
  m.epochs = j.at("epochs").get<int>();
  m.total_grad_norm = j.at("total_grad_norm").get<double>();
  m.param_change = j.at("param_change").get<double>();
  m.wall_clock_s = j.at("wall_clock_s").get<double>();
  m.flops_estimate = j.at("flops_estimate").get<double>();
  m.reached_cutoff = j.at("reached_cutoff").get<bool>();
  m.valid = j.value("valid", true);
  m.halt = parse_halt_reason(j.value("halt", std::string("none")));
  m.steps = j.value("steps", std::size_t{0});
  m.accuracy_trace = j.value("accuracy_trace", std::vector<double>{});
  return m;
}

json to_json(const RunRecord& r) {
  json cell{{"suite", r.cell.suite}, {"cutoff", r.cell.cutoff}, {"seed", r.cell.seed}, {"run", r.cell.run}};
  if (r.cell.suite == "dist") {
    cell["noise"] = r.cell.noise;
    cell["level"] = r.cell.level;
  } else {
    cell["original"] = r.cell.original;
    cell["target"] = r.cell.target;
  }
  json j{{"key", r.cell.key()},
         {"cell", cell},
         {"index_kind", r.index_kind},
         {"index", std::isfinite(r.index) ? json(r.index) : json(nullptr)},
         {"completed", r.completed}};
  if (r.measures) j["measures"] = to_json(*r.measures);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  const auto& c = j.at("cell");
  r.cell.suite = c.at("suite").get<std::string>();
  r.cell.cutoff = c.at("cutoff").get<double>();
  r.cell.seed = c.at("seed").get<std::uint64_t>();
  r.cell.run = c.at("run").get<std::string>();
  if (r.cell.suite == "dist") {
    r.cell.noise = c.at("noise").get<std::string>();
    r.cell.level = c.at("level").get<int>();
  } else {
    r.cell.original = c.at("original").get<std::string>();
    r.cell.target = c.at("target").get<std::string>();
  }
  r.index_kind = j.at("index_kind").get<std::string>();
  r.index = j.at("index").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("index").get<double>();
  r.completed = j.at("completed").get<bool>();
  if (j.contains("measures")) r.measures = measures_from_json(j.at("measures"));
  r.error = j.value("error", std::string());
  return r;
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open records file " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  }
  return out;
}

struct JsonlRecordWriter::Impl {
  std::mutex mutex;
  std::ofstream out;
};

JsonlRecordWriter::JsonlRecordWriter(const std::filesystem::path& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::app);
  if (!impl_->out) {
    delete impl_;
    throw ParameterError("cannot open records file " + path.string() + " for appending");
  }
}

JsonlRecordWriter::~JsonlRecordWriter() { delete impl_; }

void JsonlRecordWriter::write(const RunRecord& record) {
  const std::string line = to_json(record).dump();
  std::lock_guard lock(impl_->mutex);
  impl_->out << line << '\n';
  impl_->out.flush();
}

namespace {

/// Compute-once value shared by concurrent cells.
template <typename Key, typename Value>
class OnceCache {
 public:
  template <typename Fn>
  const Value& get(const Key& key, Fn&& compute) {
    std::shared_ptr<Slot> slot;
    {
      std::lock_guard lock(mutex_);
      auto& s = slots_[key];
      if (!s) s = std::make_shared<Slot>();
      slot = s;
    }
    std::call_once(slot->once, [&] {
      try {
        slot->value.emplace(compute());
      } catch (...) {
        slot->error = std::current_exception();
      }
    });
    if (slot->error) std::rethrow_exception(slot->error);
    return *slot->value;
  }

 private:
  struct Slot {
    std::once_flag once;
    std::optional<Value> value;
    std::exception_ptr error;
  };
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<Slot>> slots_;
};

/// Runs jobs [0, n) on `workers` threads (inline when 1), in index order per worker.
void run_jobs(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Seed streams per run seed.
enum Stream : std::uint64_t {
  kSplit = 1,
  kOriginalInit = 2,
  kOriginalTrain = 3,
  kNoise = 4,
  kRetrain = 5,
  kScratchInit = 6,
  kPipeline = 7,
  kHead = 8,
  kScratchTrain = 9,
};

TrainConfig with_seed(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

struct OriginalModel {
  SplitResult split;
  ModelParams params;
  std::optional<ClassEmbeddingSet> embeddings;
};

class SuiteRun {
 public:
  SuiteRun(const RecordSink& sink, const std::set<std::string>& done) : sink_(sink), done_(done) {}

  bool is_done(const CellId& cell) const { return done_.count(cell.key()) != 0; }

  void emit(const RunRecord& record) {
    std::lock_guard lock(mutex_);
    sink_(record);
    ++summary_.written;
    if (!record.completed) ++summary_.failed;
  }
  void skip() {
    std::lock_guard lock(mutex_);
    ++summary_.skipped;
  }
  SuiteSummary summary() const { return summary_; }

 private:
  const RecordSink& sink_;
  const std::set<std::string>& done_;
  std::mutex mutex_;
  SuiteSummary summary_;
};

RunRecord failed(const CellId& cell, const std::string& kind, double index, const std::exception& e) {
  RunRecord r{cell, kind, index, false, std::nullopt, e.what()};
  if (const auto* tf = dynamic_cast<const TrainingFailure*>(&e)) r.measures = tf->partial();
  return r;
}

}  // namespace

SuiteSummary run_distribution_suite(const ExperimentConfig& config, const RecordSink& sink,
                                    const std::set<std::string>& done) {
  config.validate();
  const LabeledDataset data = generate_synthetic(config.dataset);
  const ModelSpec spec = config.model_spec(data.num_classes);
  const auto cutoffs = config.retrain_cutoffs();
  OnceCache<std::uint64_t, OriginalModel> originals;
  SuiteRun run(sink, done);

  struct Job {
    NoiseSpec noise;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& noise : config.noises) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({noise, seed});
  }

  auto original_for = [&](std::uint64_t seed) -> const OriginalModel& {
    return originals.get(seed, [&] {
      SplitSpec split_spec = config.split;
      split_spec.seed = derive_seed(seed, kSplit);
      OriginalModel m{split_for_retraining(data, split_spec), init_params(spec, derive_seed(seed, kOriginalInit)),
                      std::nullopt};
      m.params = train_to_cutoff(m.params, m.split.original, with_seed(config.train, derive_seed(seed, kOriginalTrain)))
                     .params;
      m.embeddings = class_embeddings(extract_embeddings(m.params, m.split.original), data.num_classes);
      return m;
    });
  };

  run_jobs(jobs.size(), config.parallel, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::vector<CellId> cells;
    for (double cutoff : cutoffs) {
      CellId base{"dist", std::string(to_string(job.noise.kind)), job.noise.level, "", "", cutoff, job.seed, "retrain"};
      cells.push_back(base);
      if (config.scratch) {
        base.run = "scratch";
        cells.push_back(base);
      }
    }
    std::vector<CellId> todo;
    for (const auto& c : cells) {
      if (run.is_done(c)) run.skip();
      else todo.push_back(c);
    }
    if (todo.empty()) return;

    double index = std::numeric_limits<double>::quiet_NaN();
    LabeledDataset shifted;
    const OriginalModel* original = nullptr;
    try {
      original = &original_for(job.seed);
      NoiseSpec noise = job.noise;
      noise.seed = derive_seed(derive_seed(job.seed, kNoise), job.noise.seed);
      shifted = apply_shift(original->split.shifted_base, noise);
      const auto shifted_embeddings =
          class_embeddings(extract_embeddings(original->params, shifted), data.num_classes);
      index = resque_dist(*original->embeddings, shifted_embeddings);
    } catch (const std::exception& e) {
      for (const auto& c : todo) run.emit(failed(c, "resque_dist", index, e));
      return;
    }
    for (const auto& c : todo) {
      try {
        TrainConfig tc = config.train;
        tc.cutoff_accuracy = c.cutoff;
        TrainOutcome outcome = c.run == "scratch"
            ? train_to_cutoff(init_params(spec, derive_seed(job.seed, kScratchInit)), shifted,
                              with_seed(tc, derive_seed(job.seed, kScratchTrain)))
            : train_to_cutoff(original->params, shifted, with_seed(tc, derive_seed(job.seed, kRetrain)));
        run.emit(RunRecord{c, "resque_dist", index, true, std::move(outcome.measures), ""});
      } catch (const std::exception& e) {
        run.emit(failed(c, "resque_dist", index, e));
      }
    }
  });
  return run.summary();
}

SuiteSummary run_task_suite(const ExperimentConfig& config, const RecordSink& sink, const std::set<std::string>& done) {
  config.validate();
  if (config.tasks.tasks.size() < 3) throw ParameterError("task suite needs a roster of at least 3 tasks");
  if (config.tasks.pairs.empty()) throw ParameterError("task suite needs at least one (original, target) pair");
  const auto cutoffs = config.retrain_cutoffs();
  OnceCache<std::pair<std::string, std::uint64_t>, ModelParams> originals;
  OnceCache<std::string, LabeledDataset> datasets;
  SuiteRun run(sink, done);

  auto dataset_for = [&](const TaskSpec& task) -> const LabeledDataset& {
    return datasets.get(task.name, [&] { return generate_synthetic(config.task_dataset(task)); });
  };
  auto original_for = [&](const TaskSpec& task, std::uint64_t seed) -> const ModelParams& {
    return originals.get({task.name, seed}, [&] {
      const ModelSpec spec = config.model_spec(task.num_classes);
      return train_to_cutoff(init_params(spec, derive_seed(seed, kOriginalInit)), dataset_for(task),
                             with_seed(config.train, derive_seed(seed, kOriginalTrain)))
          .params;
    });
  };

  struct Job {
    const TaskSpec* original;
    const TaskSpec* target;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& [a, b] : config.tasks.pairs) {
    for (std::uint64_t seed : config.seeds) jobs.push_back({&config.tasks.find(a), &config.tasks.find(b), seed});
  }

  const bool peak = config.tasks.mode == TaskMode::peak;
  run_jobs(jobs.size(), config.parallel, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::vector<CellId> todo;
    auto consider = [&](CellId c) {
      if (run.is_done(c)) run.skip();
      else todo.push_back(std::move(c));
    };
    if (peak) {
      consider({"task", "", 0, job.original->name, job.target->name, config.train.cutoff_accuracy, job.seed, "peak"});
    } else {
      for (double cutoff : cutoffs) {
        consider({"task", "", 0, job.original->name, job.target->name, cutoff, job.seed, "retrain"});
        if (config.scratch) consider({"task", "", 0, job.original->name, job.target->name, cutoff, job.seed, "scratch"});
      }
    }
    if (todo.empty()) return;

    double index = std::numeric_limits<double>::quiet_NaN();
    const ModelParams* original = nullptr;
    const LabeledDataset* target = nullptr;
    try {
      original = &original_for(*job.original, job.seed);
      target = &dataset_for(*job.target);
      index = resque_task_pipeline(*original, *target, with_seed(config.train, derive_seed(job.seed, kPipeline)),
                                   config.tasks.init_scheme)
                  .index;
    } catch (const std::exception& e) {
      for (const auto& c : todo) run.emit(failed(c, "resque_task", index, e));
      return;
    }
    for (const auto& c : todo) {
      try {
        TrainConfig tc = with_seed(config.train, derive_seed(job.seed, kRetrain));
        tc.cutoff_accuracy = c.cutoff;
        TrainOutcome outcome;
        if (c.run == "scratch") {
          outcome = train_to_cutoff(init_params(config.model_spec(target->num_classes),
                                                derive_seed(job.seed, kScratchInit)),
                                    *target, with_seed(tc, derive_seed(job.seed, kScratchTrain)));
        } else {
          ModelParams params = *original;
          reset_head(params, target->num_classes, derive_seed(job.seed, kHead));
          outcome = peak ? train_fixed_epochs(std::move(params), *target, tc, config.tasks.peak_epochs)
                         : train_to_cutoff(std::move(params), *target, tc);
        }
        run.emit(RunRecord{c, "resque_task", index, true, std::move(outcome.measures), ""});
      } catch (const std::exception& e) {
        run.emit(failed(c, "resque_task", index, e));
      }
    }
  });
  return run.summary();
}

SuiteSummary run_suite_to_file(const ExperimentConfig& config, SuiteKind kind, const std::filesystem::path& records_path) {
  std::set<std::string> done;
  if (std::filesystem::exists(records_path)) {
    for (const auto& r : read_records(records_path)) done.insert(r.cell.key());
  }
  JsonlRecordWriter writer(records_path);
  const RecordSink sink = [&](const RunRecord& r) { writer.write(r); };
  return kind == SuiteKind::dist ? run_distribution_suite(config, sink, done) : run_task_suite(config, sink, done);
}

}  // namespace resque
