#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "resque/config.hpp"
#include "resque/errors.hpp"

using namespace resque;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults validate") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.retrain_cutoffs() == std::vector<double>{c.train.cutoff_accuracy});
  }

  TEST_CASE("parses every section") {
    const auto c = parse_config(json::parse(R"({
      "dataset": {"pattern": "rings", "num_classes": 4, "samples_per_class": 40, "height": 8, "width": 8,
                  "channels": 2, "seed": 9},
      "split": {"original_fraction": 0.6, "shifted_fraction": 0.5, "overlap_fraction": 0.1},
      "model": {"arch": "mlp"},
      "train": {"optimizer": "sgd", "learning_rate": 0.05, "lr_decay_epochs": [10], "batch_size": 8,
                "cutoff_accuracy": 0.8, "max_epochs": 12, "record_wall_clock": false},
      "noises": [{"kind": "blur", "levels": [1, 3]}, {"kind": "salt_pepper", "level": 2, "seed": 4}],
      "tasks": {"roster": [{"name": "a", "seed": 1}, {"name": "b", "seed": 2, "pattern": "blobs", "num_classes": 3},
                           {"name": "c", "seed": 3}],
                "pairs": [["a", "b"], ["c", "b"]], "mode": "peak", "peak_epochs": 5, "init_scheme": "kmeanspp"},
      "cutoffs": [0.7, 0.8], "seeds": [5], "scratch": true, "average_seeds": false,
      "output": {"records": "r.jsonl", "report_dir": "out"}, "parallel": 2
    })"));
    CHECK(c.dataset.pattern == Pattern::rings);
    CHECK(c.dataset.channels == 2);
    CHECK(c.split.original_fraction == 0.6);
    CHECK(c.arch == Arch::mlp);
    CHECK(c.hidden == std::vector<std::size_t>{64});
    CHECK(c.train.optimizer == OptimizerKind::sgd);
    CHECK(c.train.lr_decay_epochs == std::vector<int>{10});
    CHECK_FALSE(c.train.record_wall_clock);
    REQUIRE(c.noises.size() == 3);
    CHECK(c.noises[1].level == 3);
    CHECK(c.noises[2].kind == NoiseKind::salt_pepper);
    CHECK(c.noises[2].seed == 4);
    REQUIRE(c.tasks.tasks.size() == 3);
    CHECK(c.tasks.tasks[0].pattern == Pattern::rings);
    CHECK(c.tasks.tasks[0].num_classes == 4);
    CHECK(c.tasks.tasks[1].pattern == Pattern::blobs);
    CHECK(c.tasks.tasks[1].num_classes == 3);
    CHECK(c.tasks.mode == TaskMode::peak);
    CHECK(c.tasks.init_scheme == InitScheme::kmeanspp);
    CHECK(c.retrain_cutoffs() == std::vector<double>{0.7, 0.8});
    CHECK(c.scratch);
    CHECK(c.records_path == "r.jsonl");
    CHECK(c.parallel == 2);
    const auto ds = c.task_dataset(c.tasks.find("b"));
    CHECK(ds.seed == 2);
    CHECK(ds.height == 8);
  }

  TEST_CASE("round trip through JSON") {
    auto c = parse_config(json::parse(R"({"noises": [{"kind": "gaussian", "level": 4}], "seeds": [1, 2],
                                          "tasks": {"roster": [{"name": "x", "seed": 3}]}})"));
    const json j = to_json(c);
    CHECK(to_json(parse_config(j)) == j);
  }

  TEST_CASE("invalid configs are parameter errors") {
    const char* bad[] = {
        R"({"unknown": 1})",
        R"({"train": {"learning_rate": -1}})",
        R"({"train": {"lr": 0.1}})",
        R"({"noises": [{"kind": "gaussian", "level": 11}]})",
        R"({"noises": [{"kind": "fog", "level": 1}]})",
        R"({"noises": [{"kind": "blur"}]})",
        R"({"seeds": []})",
        R"({"cutoffs": [1.5]})",
        R"({"split": {"original_fraction": 0.2, "shifted_fraction": 0.2, "overlap_fraction": 0.3}})",
        R"({"tasks": {"roster": [{"name": "a", "seed": 1}, {"name": "a", "seed": 2}]}})",
        R"({"tasks": {"roster": [{"name": "a", "seed": 1}], "pairs": [["a", "z"]]}})",
        R"({"tasks": {"mode": "fast"}})",
        R"({"model": {"arch": "transformer"}})",
        R"({"dataset": {"num_classes": "five"}})",
        R"({"parallel": 0})",
    };
    for (const char* text : bad) {
      CAPTURE(text);
      CHECK_THROWS_AS(parse_config(json::parse(text)), ParameterError);
    }
  }

  TEST_CASE("loading a file") {
    const auto path = std::filesystem::temp_directory_path() / "resque_config_test.json";
    {
      std::ofstream out(path);
      out << R"({"seeds": [7]})";
    }
    CHECK(load_config(path).seeds == std::vector<std::uint64_t>{7});
    {
      std::ofstream out(path);
      out << "{not json";
    }
    CHECK_THROWS_AS(load_config(path), ParameterError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_config(path), ParameterError);
  }
}
