#include "resque/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "resque/errors.hpp"

namespace resque {

std::string_view to_string(ReportMode mode) noexcept { return mode == ReportMode::dist ? "dist" : "task"; }

ReportMode parse_report_mode(std::string_view name) {
  if (name == "dist") return ReportMode::dist;
  if (name == "task") return ReportMode::task;
  throw ParameterError("unknown report mode '" + std::string(name) + "' (expected dist or task)");
}

const std::vector<std::string>& report_measures() {
  static const std::vector<std::string> names = {"epochs",         "total_grad_norm", "param_change",
                                                 "wall_clock_s",   "flops_estimate",  "peak_accuracy"};
  return names;
}

namespace {

constexpr std::size_t kMinPoints = 3;

std::map<std::string, double> measure_values(const RetrainMeasures& m) {
  return {{"epochs", m.epochs},
          {"total_grad_norm", m.total_grad_norm},
          {"param_change", m.param_change},
          {"wall_clock_s", m.wall_clock_s},
          {"flops_estimate", m.flops_estimate},
          {"peak_accuracy", m.peak_accuracy()}};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write " + path.string());
  return out;
}

// Cell identity without the run flag, so retrain and scratch points pair up.
std::string pairing_key(const SeriesPoint& p, bool average_seeds) {
  CellId id = p.id;
  id.run.clear();
  return average_seeds ? id.group_key() : id.key();
}

}  // namespace

const CorrelationRow& Report::row(double cutoff, const std::string& run, const std::string& measure) const {
  for (const auto& r : correlations) {
    if (r.cutoff == cutoff && r.run == run && r.measure == measure) return r;
  }
  throw ParameterError("no correlation row for cutoff " + num(cutoff) + ", run " + run + ", measure " + measure);
}

Report build_report(const std::vector<RunRecord>& records, ReportMode mode, bool average_seeds) {
  const std::string suite(to_string(mode));
  Report report;
  report.mode = mode;

  // Group completed runs into points; std::map keeps output order independent of record order.
  std::map<std::string, SeriesPoint> points;
  for (const auto& r : records) {
    if (r.cell.suite != suite || !r.completed || !r.measures || !std::isfinite(r.index)) continue;
    const std::string key = average_seeds ? r.cell.group_key() : r.cell.key();
    auto [it, fresh] = points.try_emplace(key);
    SeriesPoint& p = it->second;
    if (fresh) {
      p.cell = key;
      p.id = r.cell;
    }
    ++p.runs;
    p.index += r.index;
    for (const auto& [name, v] : measure_values(*r.measures)) p.measures[name] += v;
  }
  for (auto& [key, p] : points) {
    p.index /= static_cast<double>(p.runs);
    for (auto& [name, v] : p.measures) v /= static_cast<double>(p.runs);
    report.series.push_back(p);
  }

  // One correlation group per (cutoff, run); scratch runs are only compared, not correlated.
  std::map<std::pair<double, std::string>, std::vector<const SeriesPoint*>> groups;
  for (const auto& p : report.series) {
    if (p.id.run != "scratch") groups[{p.id.cutoff, p.id.run}].push_back(&p);
  }
  std::vector<std::string> missing;
  if (groups.empty()) missing.push_back(suite + ": no completed records");
  for (const auto& [group, members] : groups) {
    if (members.size() < kMinPoints) {
      missing.push_back(suite + "/cutoff=" + num(group.first) + "/" + group.second + ": " +
                        std::to_string(members.size()) + " point(s), need " + std::to_string(kMinPoints));
    }
  }
  if (!missing.empty()) {
    std::string what = "under-powered report:";
    for (const auto& m : missing) what += "\n  " + m;
    throw UnderpoweredError(what, missing);
  }

  for (const auto& [group, members] : groups) {
    std::vector<double> x;
    for (const auto* p : members) x.push_back(p->index);
    for (const auto& measure : report_measures()) {
      if (measure == "peak_accuracy" && group.second != "peak") continue;
      std::vector<double> y;
      for (const auto* p : members) y.push_back(p->measures.at(measure));
      CorrelationRow row{group.first, group.second, measure, members.size(), std::nullopt, std::nullopt};
      try {
        row.pearson = pearson(x, y);
        row.spearman = spearman(x, y);
      } catch (const DegenerateError&) {
        row.pearson.reset();
        row.spearman.reset();
      }
      report.correlations.push_back(row);
    }
  }

  std::map<std::string, const SeriesPoint*> retrain, scratch;
  for (const auto& p : report.series) {
    if (p.id.run == "retrain") retrain[pairing_key(p, average_seeds)] = &p;
    if (p.id.run == "scratch") scratch[pairing_key(p, average_seeds)] = &p;
  }
  for (const auto& [key, r] : retrain) {
    auto s = scratch.find(key);
    if (s == scratch.end()) continue;
    report.scratch.push_back({key, r->id.cutoff, r->index, r->measures.at("epochs"), s->second->measures.at("epochs"),
                              r->measures.at("total_grad_norm"), s->second->measures.at("total_grad_norm")});
  }
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto opt = [](const std::optional<CorrelationResult>& c, bool p) {
    return c ? num(p ? c->p_value : c->coefficient) : std::string();
  };
  {
    auto out = open_csv(dir / "correlations.csv");
    out << "cutoff,run,measure,n,pearson_r,pearson_p,spearman_rho,spearman_p\n";
    for (const auto& r : report.correlations) {
      out << num(r.cutoff) << ',' << r.run << ',' << r.measure << ',' << r.n << ',' << opt(r.pearson, false) << ','
          << opt(r.pearson, true) << ',' << opt(r.spearman, false) << ',' << opt(r.spearman, true) << '\n';
    }
  }
  {
    auto out = open_csv(dir / "series.csv");
    out << "cell,noise,level,original,target,cutoff,run,runs,index";
    for (const auto& m : report_measures()) out << ',' << m;
    out << '\n';
    for (const auto& p : report.series) {
      out << csv_field(p.cell) << ',' << p.id.noise << ',' << p.id.level << ',' << csv_field(p.id.original) << ','
          << csv_field(p.id.target) << ',' << num(p.id.cutoff) << ',' << p.id.run << ',' << p.runs << ','
          << num(p.index);
      for (const auto& m : report_measures()) out << ',' << num(p.measures.at(m));
      out << '\n';
    }
  }
  {
    auto out = open_csv(dir / "scratch_vs_retrain.csv");
    out << "cell,cutoff,index,retrain_epochs,scratch_epochs,retrain_total_grad_norm,scratch_total_grad_norm\n";
    for (const auto& s : report.scratch) {
      out << csv_field(s.cell) << ',' << num(s.cutoff) << ',' << num(s.index) << ',' << num(s.retrain_epochs) << ','
          << num(s.scratch_epochs) << ',' << num(s.retrain_grad_norm) << ',' << num(s.scratch_grad_norm) << '\n';
    }
  }
}

}  // namespace resque
