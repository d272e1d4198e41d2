#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "resque/errors.hpp"
#include "resque/harness.hpp"

using namespace resque;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.dataset = {Pattern::gratings, 3, 30, 8, 8, 1, 2};
  c.arch = Arch::mlp;
  c.hidden = {16};
  c.train.learning_rate = 3e-3;
  c.train.batch_size = 16;
  c.train.cutoff_accuracy = 0.8;
  c.train.max_epochs = 8;
  c.train.eval_fraction = 0.0;
  c.train.record_wall_clock = false;
  c.noises = {{NoiseKind::gaussian, 2, 0}, {NoiseKind::blur, 6, 0}};
  c.seeds = {0, 1};
  return c;
}

ExperimentConfig small_task_config() {
  ExperimentConfig c = small_config();
  c.noises.clear();
  c.tasks.tasks = {{"g", 1, 3, Pattern::gratings}, {"r", 2, 3, Pattern::rings}, {"b", 3, 3, Pattern::blobs}};
  c.tasks.pairs = {{"g", "g"}, {"r", "g"}, {"b", "g"}};
  c.seeds = {0};
  return c;
}

std::vector<RunRecord> collect(const ExperimentConfig& c, SuiteKind kind, const std::set<std::string>& done = {}) {
  std::vector<RunRecord> out;
  const RecordSink sink = [&](const RunRecord& r) { out.push_back(r); };
  if (kind == SuiteKind::dist) run_distribution_suite(c, sink, done);
  else run_task_suite(c, sink, done);
  return out;
}

std::string dump(const std::vector<RunRecord>& records) {
  std::map<std::string, std::string> by_key;
  for (const auto& r : records) by_key[r.cell.key()] = to_json(r).dump();
  std::string s;
  for (const auto& [k, v] : by_key) s += v + "\n";
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("cell keys") {
    CellId a{"dist", "gaussian", 3, "", "", 0.9, 4, "retrain"};
    CellId b = a;
    b.seed = 5;
    CHECK(a.key() != b.key());
    CHECK(a.group_key() == b.group_key());
    b.run = "scratch";
    CHECK(a.group_key() != b.group_key());
  }

  TEST_CASE("record JSON round trip, including a NaN index") {
    RunRecord r;
    r.cell = {"task", "", 0, "a", "b", 0.95, 2, "retrain"};
    r.index_kind = "resque_task";
    r.index = 0.123456789012345678;
    r.completed = true;
    RetrainMeasures m;
    m.epochs = 3;
    m.total_grad_norm = 1.5;
    m.param_change = 0.25;
    m.flops_estimate = 1e9;
    m.reached_cutoff = true;
    m.halt = HaltReason::cutoff;
    m.steps = 12;
    m.accuracy_trace = {0.5, 0.8, 0.96};
    r.measures = m;
    const auto back = record_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
    CHECK(back.index == r.index);
    CHECK(back.measures->peak_accuracy() == 0.96);

    RunRecord failed;
    failed.cell = r.cell;
    failed.index_kind = "resque_task";
    failed.index = std::nan("");
    failed.error = "lloyd: boom";
    const auto j = to_json(failed);
    CHECK(j.at("index").is_null());
    const auto f = record_from_json(j);
    CHECK(std::isnan(f.index));
    CHECK_FALSE(f.completed);
    CHECK_FALSE(f.measures.has_value());
  }

  TEST_CASE("distribution suite covers every cell once") {
    auto c = small_config();
    c.cutoffs = {0.6, 0.8};
    c.scratch = true;
    const auto records = collect(c, SuiteKind::dist);
    // noises x seeds x (cutoffs x {retrain, scratch})
    CHECK(records.size() == 2 * 2 * 2 * 2);
    std::set<std::string> keys;
    for (const auto& r : records) {
      keys.insert(r.cell.key());
      CHECK(r.cell.suite == "dist");
      CHECK(r.index_kind == "resque_dist");
      CHECK(r.completed);
      REQUIRE(r.measures.has_value());
      CHECK(r.measures->epochs >= 1);
      CHECK(r.index >= 0.0);
      CHECK(r.index <= M_PI);
      CHECK(r.measures->wall_clock_s == 0.0);
    }
    CHECK(keys.size() == records.size());
  }

  TEST_CASE("records within a noise and seed share one index") {
    auto c = small_config();
    c.scratch = true;
    std::map<std::string, double> index;
    for (const auto& r : collect(c, SuiteKind::dist)) {
      const std::string k = r.cell.noise + std::to_string(r.cell.level) + "/" + std::to_string(r.cell.seed);
      if (index.count(k)) CHECK(index[k] == r.index);
      index[k] = r.index;
    }
  }

  TEST_CASE("suites are deterministic, also when parallel") {
    const auto c = small_config();
    const auto first = dump(collect(c, SuiteKind::dist));
    CHECK(first == dump(collect(c, SuiteKind::dist)));
    auto p = c;
    p.parallel = 2;
    CHECK(first == dump(collect(p, SuiteKind::dist)));
  }

  TEST_CASE("done keys are skipped") {
    const auto c = small_config();
    const auto all = collect(c, SuiteKind::dist);
    std::set<std::string> done{all[0].cell.key(), all[2].cell.key()};
    const auto rest = collect(c, SuiteKind::dist, done);
    CHECK(rest.size() == all.size() - 2);
    for (const auto& r : rest) CHECK(done.count(r.cell.key()) == 0);
  }

  TEST_CASE("an interrupted file-backed run resumes to the same records") {
    const auto c = small_config();
    const auto full_path = temp_file("resque_full.jsonl");
    run_suite_to_file(c, SuiteKind::dist, full_path);
    const auto full = read_records(full_path);

    // simulate a crash after two records, with a torn trailing newline already written
    const auto part_path = temp_file("resque_part.jsonl");
    {
      std::ifstream in(full_path);
      std::ofstream out(part_path);
      std::string line;
      for (int i = 0; i < 2 && std::getline(in, line); ++i) out << line << "\n";
    }
    const auto summary = run_suite_to_file(c, SuiteKind::dist, part_path);
    CHECK(summary.skipped == 2);
    CHECK(summary.written == full.size() - 2);
    CHECK(dump(read_records(part_path)) == dump(full));
    // a complete file is a no-op
    CHECK(run_suite_to_file(c, SuiteKind::dist, part_path).written == 0);
    std::filesystem::remove(full_path);
    std::filesystem::remove(part_path);
  }

  TEST_CASE("malformed record lines are rejected") {
    const auto path = temp_file("resque_bad.jsonl");
    {
      std::ofstream out(path);
      out << "\n{\"key\": 1\n";
    }
    CHECK_THROWS_AS(read_records(path), ParameterError);
    std::filesystem::remove(path);
  }

  TEST_CASE("training failures become incomplete records") {
    auto c = small_config();
    c.noises = {{NoiseKind::gaussian, 1, 0}};
    c.seeds = {0};
    c.train.optimizer = OptimizerKind::sgd;
    c.train.learning_rate = 1e200;
    const auto records = collect(c, SuiteKind::dist);
    REQUIRE(records.size() == 1);
    CHECK_FALSE(records[0].completed);
    CHECK_FALSE(records[0].error.empty());
  }

  TEST_CASE("task suite in measures mode") {
    auto c = small_task_config();
    c.scratch = true;
    const auto records = collect(c, SuiteKind::task);
    CHECK(records.size() == 3 * 2);
    for (const auto& r : records) {
      CHECK(r.cell.suite == "task");
      CHECK(r.cell.target == "g");
      CHECK(r.index_kind == "resque_task");
      CHECK(r.completed);
      CHECK(std::isfinite(r.index));
    }
  }

  TEST_CASE("task suite in peak mode trains a fixed number of epochs") {
    auto c = small_task_config();
    c.tasks.mode = TaskMode::peak;
    c.tasks.peak_epochs = 3;
    const auto records = collect(c, SuiteKind::task);
    CHECK(records.size() == 3);
    for (const auto& r : records) {
      CHECK(r.cell.run == "peak");
      REQUIRE(r.measures.has_value());
      CHECK(r.measures->epochs == 3);
      CHECK(r.measures->accuracy_trace.size() == 3);
    }
  }

  TEST_CASE("task suite preconditions") {
    auto c = small_task_config();
    c.tasks.tasks.pop_back();
    c.tasks.pairs.pop_back();
    CHECK_THROWS_AS(collect(c, SuiteKind::task), ParameterError);
    auto d = small_task_config();
    d.tasks.pairs.clear();
    CHECK_THROWS_AS(collect(d, SuiteKind::task), ParameterError);
  }
}
