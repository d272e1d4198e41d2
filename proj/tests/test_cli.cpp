#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#ifndef RESQUE_CLI_PATH
#error "RESQUE_CLI_PATH must point at the CLI binary"
#endif

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(RESQUE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / "resque_cli_test";
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

const char* kSmallConfig = R"({
  "dataset": {"num_classes": 3, "samples_per_class": 30, "height": 8, "width": 8},
  "model": {"arch": "mlp", "hidden": [16]},
  "train": {"learning_rate": 0.003, "batch_size": 16, "cutoff_accuracy": 0.8, "max_epochs": 8,
            "eval_fraction": 0, "record_wall_clock": false},
  "noises": [{"kind": "gaussian", "levels": [1, 4, 8]}],
  "seeds": [0]
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("end-to-end commands succeed") {
    Scratch s;
    write(s / "c.json", kSmallConfig);
    const std::string cfg = "--config " + (s / "c.json");
    CHECK(run("gen-data " + cfg + " --out " + (s / "a.rsqd")) == 0);
    CHECK(run("gen-data " + cfg + " --seed 5 --classes 3 --out " + (s / "b.rsqd")) == 0);
    CHECK(run("train " + cfg + " --data " + (s / "a.rsqd") + " --out " + (s / "m.rsqm")) == 0);
    CHECK(run("shift " + cfg + " --data " + (s / "a.rsqd") + " --kind blur --level 5 --out " + (s / "s.rsqd")) == 0);
    CHECK(run("resque-dist " + cfg + " --model " + (s / "m.rsqm") + " --original " + (s / "a.rsqd") + " --shifted " +
              (s / "s.rsqd")) == 0);
    CHECK(run("resque-task " + cfg + " --model " + (s / "m.rsqm") + " --data " + (s / "b.rsqd")) == 0);
    CHECK(run("retrain " + cfg + " --model " + (s / "m.rsqm") + " --data " + (s / "s.rsqd") + " --epochs 2") == 0);
    CHECK(run("suite-dist " + cfg + " --out " + (s / "r.jsonl")) == 0);
    CHECK(fs::file_size(s / "r.jsonl") > 0);
    CHECK(run("report " + cfg + " --records " + (s / "r.jsonl") + " --mode dist --out " + (s / "rep")) == 0);
    CHECK(fs::exists(s / "rep/correlations.csv"));
  }

  TEST_CASE("config errors exit with 2") {
    Scratch s;
    write(s / "bad.json", R"({"train": {"learning_rate": -1}})");
    CHECK(run("suite-dist --config " + (s / "bad.json")) == 2);
    write(s / "unknown.json", R"({"colour": "red"})");
    CHECK(run("gen-data --config " + (s / "unknown.json") + " --out " + (s / "x")) == 2);
    CHECK(run("report --records " + (s / "missing.jsonl")) == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("shift --data " + (s / "nothing")) == 2);
  }

  TEST_CASE("an empty record file is under-powered, exit 4") {
    Scratch s;
    write(s / "empty.jsonl", "");
    CHECK(run("report --records " + (s / "empty.jsonl") + " --out " + (s / "rep")) == 4);
  }

  TEST_CASE("numerical failure exits with 3") {
    Scratch s;
    write(s / "c.json", kSmallConfig);
    write(s / "hot.json", R"({"dataset": {"num_classes": 3, "samples_per_class": 30, "height": 8, "width": 8},
                             "model": {"arch": "mlp", "hidden": [16]},
                             "train": {"optimizer": "sgd", "learning_rate": 1e200, "max_epochs": 3}})");
    CHECK(run("gen-data --config " + (s / "c.json") + " --out " + (s / "a.rsqd")) == 0);
    CHECK(run("train --config " + (s / "hot.json") + " --data " + (s / "a.rsqd") + " --out " + (s / "m.rsqm")) == 3);
  }
}
