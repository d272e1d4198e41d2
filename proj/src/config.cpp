#include "resque/config.hpp"

#include <fstream>
#include <set>

#include "resque/errors.hpp"

namespace resque {

using nlohmann::json;

const TaskSpec& TaskRoster::find(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.name == name) return t;
  }
  throw ParameterError("task '" + name + "' is not in the roster");
}

ModelSpec ExperimentConfig::model_spec(std::size_t num_classes) const {
  return ModelSpec{arch, dataset.channels, dataset.height, dataset.width, hidden, num_classes};
}

std::vector<double> ExperimentConfig::retrain_cutoffs() const {
  return cutoffs.empty() ? std::vector<double>{train.cutoff_accuracy} : cutoffs;
}

SyntheticSpec ExperimentConfig::task_dataset(const TaskSpec& task) const {
  SyntheticSpec spec = dataset;
  spec.seed = task.seed;
  spec.num_classes = task.num_classes;
  spec.pattern = task.pattern;
  return spec;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ParameterError("config needs at least one seed per cell");
  if (dataset.num_classes < 2 || dataset.samples_per_class < 8) throw ParameterError("dataset section is invalid");
  split.validate();
  train.validate();
  model_spec(dataset.num_classes).validate();
  for (double c : retrain_cutoffs()) {
    if (!(c >= 0.0 && c <= 1.0)) throw ParameterError("cutoff accuracies must lie in [0, 1]");
  }
  for (const auto& n : noises) level_params(n.kind, n.level);
  std::set<std::string> names;
  for (const auto& t : tasks.tasks) {
    if (!names.insert(t.name).second) throw ParameterError("duplicate task name '" + t.name + "'");
    if (t.num_classes < 2) throw ParameterError("task '" + t.name + "' needs at least 2 classes");
  }
  for (const auto& [a, b] : tasks.pairs) {
    tasks.find(a);
    tasks.find(b);
  }
  if (tasks.peak_epochs < 1) throw ParameterError("peak_epochs must be >= 1");
  if (parallel < 1) throw ParameterError("parallel must be >= 1");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw ParameterError(std::string(section) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ParameterError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{{"optimizer", to_string(c.optimizer)},
              {"learning_rate", c.learning_rate},
              {"lr_decay_epochs", c.lr_decay_epochs},
              {"lr_decay_factor", c.lr_decay_factor},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"batch_size", c.batch_size},
              {"cutoff_accuracy", c.cutoff_accuracy},
              {"max_epochs", c.max_epochs},
              {"eval_fraction", c.eval_fraction},
              {"seed", c.seed},
              {"record_wall_clock", c.record_wall_clock}};
}

TrainConfig parse_train_config(const json& j, TrainConfig c) {
  check_keys(j,
             {"optimizer", "learning_rate", "lr_decay_epochs", "lr_decay_factor", "weight_decay", "momentum",
              "batch_size", "cutoff_accuracy", "max_epochs", "eval_fraction", "seed", "record_wall_clock"},
             "train");
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  read(j, "learning_rate", c.learning_rate);
  read(j, "lr_decay_epochs", c.lr_decay_epochs);
  read(j, "lr_decay_factor", c.lr_decay_factor);
  read(j, "weight_decay", c.weight_decay);
  read(j, "momentum", c.momentum);
  read(j, "batch_size", c.batch_size);
  read(j, "cutoff_accuracy", c.cutoff_accuracy);
  read(j, "max_epochs", c.max_epochs);
  read(j, "eval_fraction", c.eval_fraction);
  read(j, "seed", c.seed);
  read(j, "record_wall_clock", c.record_wall_clock);
  c.validate();
  return c;
}

ExperimentConfig parse_config(const json& j) {
  try {
    check_keys(j,
               {"dataset", "split", "model", "train", "noises", "tasks", "cutoffs", "seeds", "scratch",
                "average_seeds", "output", "parallel"},
               "config");
    ExperimentConfig c;
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"pattern", "num_classes", "samples_per_class", "height", "width", "channels", "seed"}, "dataset");
      if (d.contains("pattern")) c.dataset.pattern = parse_pattern(d.at("pattern").get<std::string>());
      read(d, "num_classes", c.dataset.num_classes);
      read(d, "samples_per_class", c.dataset.samples_per_class);
      read(d, "height", c.dataset.height);
      read(d, "width", c.dataset.width);
      read(d, "channels", c.dataset.channels);
      read(d, "seed", c.dataset.seed);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"original_fraction", "shifted_fraction", "overlap_fraction"}, "split");
      read(s, "original_fraction", c.split.original_fraction);
      read(s, "shifted_fraction", c.split.shifted_fraction);
      read(s, "overlap_fraction", c.split.overlap_fraction);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"arch", "hidden"}, "model");
      if (m.contains("arch")) {
        c.arch = parse_arch(m.at("arch").get<std::string>());
        if (!m.contains("hidden")) c.hidden = c.arch == Arch::mlp ? std::vector<std::size_t>{64} : std::vector<std::size_t>{8, 16};
      }
      read(m, "hidden", c.hidden);
    }
    if (j.contains("train")) c.train = parse_train_config(j.at("train"), c.train);
    if (j.contains("noises")) {
      for (const auto& n : j.at("noises")) {
        check_keys(n, {"kind", "level", "levels", "seed"}, "noise");
        const NoiseKind kind = parse_noise_kind(n.at("kind").get<std::string>());
        const std::uint64_t seed = n.value("seed", std::uint64_t{0});
        std::vector<int> levels;
        if (n.contains("levels")) levels = n.at("levels").get<std::vector<int>>();
        if (n.contains("level")) levels.push_back(n.at("level").get<int>());
        if (levels.empty()) throw ParameterError("noise entry needs level or levels");
        for (int level : levels) c.noises.push_back({kind, level, seed});
      }
    }
    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      check_keys(t, {"roster", "pairs", "mode", "peak_epochs", "init_scheme"}, "tasks");
      for (const auto& r : t.value("roster", json::array())) {
        check_keys(r, {"name", "seed", "num_classes", "pattern"}, "roster entry");
        c.tasks.tasks.push_back({r.at("name").get<std::string>(), r.at("seed").get<std::uint64_t>(),
                                 r.value("num_classes", c.dataset.num_classes),
                                 r.contains("pattern") ? parse_pattern(r.at("pattern").get<std::string>())
                                                       : c.dataset.pattern});
      }
      for (const auto& p : t.value("pairs", json::array())) {
        c.tasks.pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      }
      if (t.contains("mode")) {
        const auto mode = t.at("mode").get<std::string>();
        if (mode == "measures") c.tasks.mode = TaskMode::measures;
        else if (mode == "peak") c.tasks.mode = TaskMode::peak;
        else throw ParameterError("task mode must be 'measures' or 'peak'");
      }
      read(t, "peak_epochs", c.tasks.peak_epochs);
      if (t.contains("init_scheme")) c.tasks.init_scheme = parse_init_scheme(t.at("init_scheme").get<std::string>());
    }
    read(j, "cutoffs", c.cutoffs);
    read(j, "seeds", c.seeds);
    read(j, "scratch", c.scratch);
    read(j, "average_seeds", c.average_seeds);
    read(j, "parallel", c.parallel);
    if (j.contains("output")) {
      const auto& o = j.at("output");
      check_keys(o, {"records", "report_dir"}, "output");
      read(o, "records", c.records_path);
      read(o, "report_dir", c.report_dir);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParameterError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json noises = json::array();
  for (const auto& n : c.noises) noises.push_back({{"kind", to_string(n.kind)}, {"level", n.level}, {"seed", n.seed}});
  json roster = json::array();
  for (const auto& t : c.tasks.tasks) roster.push_back({{"name", t.name}, {"seed", t.seed}, {"num_classes", t.num_classes}, {"pattern", to_string(t.pattern)}});
  json pairs = json::array();
  for (const auto& [a, b] : c.tasks.pairs) pairs.push_back({a, b});
  return json{
      {"dataset",
       {{"pattern", to_string(c.dataset.pattern)},
        {"num_classes", c.dataset.num_classes},
        {"samples_per_class", c.dataset.samples_per_class},
        {"height", c.dataset.height},
        {"width", c.dataset.width},
        {"channels", c.dataset.channels},
        {"seed", c.dataset.seed}}},
      {"split",
       {{"original_fraction", c.split.original_fraction},
        {"shifted_fraction", c.split.shifted_fraction},
        {"overlap_fraction", c.split.overlap_fraction}}},
      {"model", {{"arch", to_string(c.arch)}, {"hidden", c.hidden}}},
      {"train", to_json(c.train)},
      {"noises", noises},
      {"tasks",
       {{"roster", roster},
        {"pairs", pairs},
        {"mode", c.tasks.mode == TaskMode::peak ? "peak" : "measures"},
        {"peak_epochs", c.tasks.peak_epochs},
        {"init_scheme", to_string(c.tasks.init_scheme)}}},
      {"cutoffs", c.cutoffs},
      {"seeds", c.seeds},
      {"scratch", c.scratch},
      {"average_seeds", c.average_seeds},
      {"output", {{"records", c.records_path}, {"report_dir", c.report_dir}}},
      {"parallel", c.parallel}};
}

}  // namespace resque
