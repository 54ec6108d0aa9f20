#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "nlicl/error.hpp"
#include "nlicl/eval.hpp"

namespace nlicl {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

void check_run(const RunResult& run, const std::filesystem::path& source) {
  const double recount = accuracy_of(run.records);
  if (recount != run.accuracy) {
    throw AssertionError(source.filename().string() + ": stored accuracy " + fmt(run.accuracy) +
                         " disagrees with records (" + fmt(recount) + ") for " + run.strategy + " r=" + fmt(run.rate));
  }
}

struct Cell {
  double accuracy = 0.0;
  std::optional<double> tau;
  std::size_t queries = 0;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

ReportFiles emit_report(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("results directory '" + dir.string() + "' does not exist");

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  // (strategy, rate) -> cell; later files win.
  std::map<std::string, std::map<double, Cell>> runs;
  std::map<std::string, std::map<double, StabilityReport>> stab;
  auto add_run = [&](const RunResult& r, const std::filesystem::path& src) {
    check_run(r, src);
    runs[r.strategy][r.rate] = {r.accuracy, r.rectification_accuracy, r.records.size()};
  };
  for (const auto& path : files) {
    const auto name = path.filename().string();
    if (name.starts_with("run_")) {
      add_run(RunResult::from_json(read_json(path)), path);
    } else if (name.starts_with("sweep_")) {
      const auto j = read_json(path);
      for (const auto& r : j.at("runs")) add_run(RunResult::from_json(r), path);
    } else if (name.starts_with("stability_")) {
      auto s = StabilityReport::from_json(read_json(path));
      stab[s.strategy][s.rate] = s;
    }
  }

  json summary = {{"runs", json::array()}, {"stability", json::array()}, {"stability_averaged", json::array()}};
  for (const auto& [strategy, cells] : runs) {
    for (const auto& [rate, c] : cells) {
      json row = {{"strategy", strategy}, {"rate", rate}, {"accuracy", c.accuracy}, {"queries", c.queries}};
      row["rectification_accuracy"] = c.tau ? json(*c.tau) : json(nullptr);
      auto s = stab.find(strategy);
      if (s != stab.end() && s->second.contains(rate)) {
        row["std"] = s->second.at(rate).std;
      } else {
        row["std"] = nullptr;
      }
      summary["runs"].push_back(std::move(row));
    }
  }
  for (const auto& [strategy, by_rate] : stab) {
    double mean_sum = 0.0, std_sum = 0.0, var_sum = 0.0;
    for (const auto& [rate, s] : by_rate) {
      summary["stability"].push_back(s.to_json());
      mean_sum += s.mean;
      std_sum += s.std;
      var_sum += s.std * s.std;
    }
    const double k = static_cast<double>(by_rate.size());
    summary["stability_averaged"].push_back({{"strategy", strategy},
                                             {"rates", by_rate.size()},
                                             {"mean", mean_sum / k},
                                             {"mean_std", std_sum / k},
                                             {"pooled_std", std::sqrt(var_sum / k)}});
  }

  ReportFiles out;
  out.summary = dir / "summary.json";
  write_text(out.summary, summary.dump(1) + "\n");

  // Strategies as rows, noise rates as columns.
  std::vector<double> all_rates;
  for (const auto& [strategy, cells] : runs) {
    for (const auto& [rate, c] : cells) all_rates.push_back(rate);
  }
  std::sort(all_rates.begin(), all_rates.end());
  all_rates.erase(std::unique(all_rates.begin(), all_rates.end()), all_rates.end());
  std::ostringstream table;
  table << "strategy";
  for (double r : all_rates) table << ',' << fmt(r);
  table << '\n';
  for (const auto& [strategy, cells] : runs) {
    table << strategy;
    for (double r : all_rates) {
      table << ',';
      if (auto it = cells.find(r); it != cells.end()) table << fmt(it->second.accuracy);
    }
    table << '\n';
  }
  out.table = dir / "table.csv";
  write_text(out.table, table.str());

  const auto series_dir = dir / "series";
  std::filesystem::create_directories(series_dir);
  std::set<std::string> strategies;
  for (const auto& [s, _] : runs) strategies.insert(s);
  for (const auto& [s, _] : stab) strategies.insert(s);
  for (const auto& strategy : strategies) {
    std::map<double, std::pair<std::optional<double>, std::optional<double>>> points;
    if (auto it = runs.find(strategy); it != runs.end()) {
      for (const auto& [rate, c] : it->second) points[rate].first = c.accuracy;
    }
    if (auto it = stab.find(strategy); it != stab.end()) {
      for (const auto& [rate, s] : it->second) {
        if (!points[rate].first) points[rate].first = s.mean;
        points[rate].second = s.std;
      }
    }
    std::ostringstream csv;
    csv << "rate,accuracy,std\n";
    for (const auto& [rate, p] : points) {
      csv << fmt(rate) << ',' << (p.first ? fmt(*p.first) : "") << ',' << (p.second ? fmt(*p.second) : "") << '\n';
    }
    const auto path = series_dir / (strategy + ".csv");
    write_text(path, csv.str());
    out.series.push_back(path);
  }
  return out;
}

}  // namespace nlicl
