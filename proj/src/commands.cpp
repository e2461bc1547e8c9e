#include "causalbb/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "causalbb/errors.hpp"

namespace causalbb {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_field(const std::string& text, const std::string& where) {
  if (text == "nan") return std::nan("");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw SchemaError(where + ": not a number: '" + text + "'");
  return v;
}

std::string fixed3(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw SchemaError(origin + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  const auto expected = split_csv_line(kMetricsHeader);
  // The leading columns are the contract; trailing ones are optional.
  const std::size_t required = 10;
  if (header.size() < required || !std::equal(expected.begin(), expected.begin() + required, header.begin()))
    throw SchemaError(origin + ": header does not match the metrics schema");
  std::vector<MetricsRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number);
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw SchemaError(where + ": wrong number of fields");
    MetricsRow r;
    r.scenario = cells[0];
    r.estimator = cells[1];
    r.n = static_cast<Eigen::Index>(parse_field(cells[2], where));
    r.R = static_cast<int>(parse_field(cells[3], where));
    r.bias = parse_field(cells[4], where);
    r.sd = parse_field(cells[5], where);
    r.rmse = parse_field(cells[6], where);
    r.coverage = parse_field(cells[7], where);
    r.flagged_draws = static_cast<long>(parse_field(cells[8], where));
    r.wall_time = parse_field(cells[9], where);
    if (header.size() > 10) r.failures = static_cast<int>(parse_field(cells[10], where));
    if (header.size() > 11) {
      const std::string& s = cells[11];
      r.status = s == "failed" ? CellStatus::Failed : s == "unreliable" ? CellStatus::Unreliable : CellStatus::Ok;
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw SchemaError(origin + ": no metrics rows");
  return rows;
}

std::string render_table(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw SchemaError("render_table: no rows");
  std::vector<std::string> scenarios;
  for (const auto& r : rows)
    if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);

  struct Block {
    const char* title;
    double MetricsRow::*field;
  };
  const Block blocks[] = {{"Bias", &MetricsRow::bias},
                          {"SD", &MetricsRow::sd},
                          {"RMSE", &MetricsRow::rmse},
                          {"Coverage", &MetricsRow::coverage}};
  std::ostringstream os;
  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    const std::string& scenario = scenarios[si];
    std::vector<std::string> estimators;
    std::vector<Eigen::Index> ns;
    std::map<std::pair<std::string, Eigen::Index>, const MetricsRow*> cell;
    for (const auto& r : rows) {
      if (r.scenario != scenario) continue;
      if (std::find(estimators.begin(), estimators.end(), r.estimator) == estimators.end())
        estimators.push_back(r.estimator);
      if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
      cell[{r.estimator, r.n}] = &r;
    }
    std::sort(ns.begin(), ns.end());
    std::size_t label_width = std::string("Coverage").size();
    for (const auto& e : estimators) label_width = std::max(label_width, e.size() + 2);
    std::size_t col_width = 9;
    for (const auto& r : rows)
      if (r.scenario == scenario)
        for (const auto& b : blocks) col_width = std::max(col_width, fixed3(r.*(b.field)).size() + 2);

    if (si) os << '\n';
    os << "Scenario " << scenario << '\n';
    for (const auto& b : blocks) {
      os << pad_right(b.title, label_width);
      for (auto n : ns) os << pad_left(std::to_string(n), col_width);
      os << '\n';
      for (const auto& e : estimators) {
        os << pad_right("  " + e, label_width);
        for (auto n : ns) {
          const auto it = cell.find({e, n});
          os << pad_left(it == cell.end() ? "-" : fixed3(it->second->*(b.field)), col_width);
        }
        os << '\n';
      }
    }
  }
  return os.str();
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  std::vector<EstimatorSpec> estimators;
  for (const auto& token : config.estimators) estimators.push_back(parse_estimator(token, config.L, config.clamp));
  ReplicationResult all;
  for (const auto& name : config.scenarios) {
    const ScenarioSpec& spec = find_scenario(name);
    ReplicationResult part = run_replicates(spec, estimators, config.n_list, config.R, config.master_seed,
                                            config.workers);
    for (const auto& row : part.rows) {
      if (row.status == CellStatus::Failed) {
        err << "cell failed: scenario=" << row.scenario << " estimator=" << row.estimator << " n=" << row.n
            << " failures=" << row.failures << '\n';
      } else if (row.status == CellStatus::Unreliable) {
        err << "cell unreliable: scenario=" << row.scenario << " estimator=" << row.estimator << " n=" << row.n
            << " failures=" << row.failures << '\n';
      }
    }
    all.rows.insert(all.rows.end(), part.rows.begin(), part.rows.end());
    all.replicates.insert(all.replicates.end(), part.replicates.begin(), part.replicates.end());
  }

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "metrics.csv");
    write_metrics_csv(f, all.rows);
    if (!f) throw Error("cannot write " + (dir / "metrics.csv").string());
  }
  {
    std::ofstream f(dir / "replicates.csv");
    write_replicates_csv(f, all.replicates);
    if (!f) throw Error("cannot write " + (dir / "replicates.csv").string());
  }
  if (config.format == OutputFormat::Text) {
    const std::string table = render_table(all.rows);
    std::ofstream f(dir / "table.txt");
    f << table;
    out << table;
  } else {
    write_metrics_csv(out, all.rows);
  }
  return all.any_failed() ? kExitFailure : kExitOk;
}

int cmd_table(const std::vector<std::string>& paths, std::ostream& out) {
  if (paths.empty()) throw SchemaError("table: no metrics files given");
  std::vector<MetricsRow> rows;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot read metrics file");
    auto part = read_metrics_csv(in, path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  out << render_table(rows);
  return kExitOk;
}

int cmd_scenarios(std::ostream& out, bool as_config) {
  for (const auto& spec : list_scenarios()) {
    if (as_config) {
      out << scenario_to_text(spec) << '\n';
    } else {
      out << pad_right(spec.name, 16) << spec.description << '\n';
    }
  }
  return kExitOk;
}

int cmd_estimators(std::ostream& out) {
  for (const auto& e : estimator_catalog())
    out << pad_right(e.token, 18) << pad_right(e.engine, 18) << e.description << '\n';
  return kExitOk;
}

}  // namespace causalbb
