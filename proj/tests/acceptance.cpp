// Acceptance runner: one block of checks per criterion, a PASS/FAIL line per
// check and a verdict line per criterion. Exit status 0 iff every selected
// criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "causalbb/commands.hpp"
#include "causalbb/harness.hpp"
#include "solver_suite.hpp"

using namespace causalbb;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Verdict {
  int criterion = 0;
  bool ok = true;

  void check(bool pass, const std::string& what) {
    ok = ok && pass;
    std::printf("  %s [c%d] %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
  }
  void note(const std::string& what) const {
    std::printf("  NOTE [c%d] %s\n", criterion, what.c_str());
    std::fflush(stdout);
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string cell_name(const std::string& est, Eigen::Index n) { return est + " n=" + std::to_string(n); }

// value within [lo, hi]
std::string in_range(const std::string& label, double v, double lo, double hi) {
  return label + " = " + fmt("%.4f", v) + " in [" + fmt("%g", lo) + ", " + fmt("%g", hi) + "]";
}

struct Study {
  std::map<std::pair<std::string, Eigen::Index>, MetricsRow> rows;
  std::vector<ReplicateRecord> replicates;
  double seconds = 0.0;

  const MetricsRow& at(const std::string& est, Eigen::Index n) const {
    const auto it = rows.find({est, n});
    if (it == rows.end()) throw std::runtime_error("missing cell " + cell_name(est, n));
    return it->second;
  }
  /// Per-replicate point estimates of one row label, indexed by replicate.
  std::map<int, double> points(const std::string& est, Eigen::Index n) const {
    std::map<int, double> out;
    for (const auto& r : replicates)
      if (r.estimator == est && r.n == n && !r.failed) out[r.replicate] = r.point;
    return out;
  }
};

Study run_study(const std::string& scenario, const std::vector<std::string>& tokens,
                const std::vector<Eigen::Index>& ns, int R, int L, int workers) {
  std::vector<EstimatorSpec> ests;
  for (const auto& t : tokens) ests.push_back(parse_estimator(t, L));
  const auto t0 = std::chrono::steady_clock::now();
  ReplicationResult res = run_replicates(find_scenario(scenario), ests, ns, R, kSeed, workers);
  Study s;
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& row : res.rows) {
    std::printf("    %-14s %-18s n=%-6ld R=%-4d bias=%8.4f sd=%7.4f rmse=%7.4f cov=%6.2f %s\n", row.scenario.c_str(),
                row.estimator.c_str(), static_cast<long>(row.n), row.R, row.bias, row.sd, row.rmse, row.coverage,
                cell_status_name(row.status).c_str());
    s.rows[{row.estimator, row.n}] = row;
  }
  std::fflush(stdout);
  s.replicates = std::move(res.replicates);
  return s;
}

// A cell counts only when every replicate succeeded.
bool healthy(Verdict& v, const Study& s) {
  bool ok = true;
  for (const auto& [key, row] : s.rows)
    if (row.status != CellStatus::Ok) {
      ok = false;
      v.check(false, cell_name(key.first, key.second) + " status " + cell_status_name(row.status));
    }
  return ok;
}

void criterion1(Verdict& v, int workers) {
  const Study s = run_study("ex1-normal", {"UN", "JT", "CF", "2S", "Correct"}, {200, 2000}, 250, 1000, workers);
  healthy(v, s);
  for (Eigen::Index n : {200, 2000}) {
    v.check(std::abs(s.at("UN", n).bias - 2.09) <= 0.10, in_range("bias(UN) n=" + std::to_string(n), s.at("UN", n).bias, 1.99, 2.19));
    v.check(std::abs(s.at("2S", n).bias) <= 0.015, in_range("bias(2S) n=" + std::to_string(n), s.at("2S", n).bias, -0.015, 0.015));
    const double cc = s.at("Correct", n).coverage;
    v.check(cc >= 91 && cc <= 97, in_range("coverage(Correct) n=" + std::to_string(n), cc, 91, 97));
    const double c2 = s.at("2S", n).coverage;
    v.check(c2 >= 99, in_range("coverage(2S) n=" + std::to_string(n), c2, 99, 100));
  }
  const double jt = s.at("JT", 2000).bias;
  v.check(std::abs(jt + 0.345) <= 0.04, in_range("bias(JT) n=2000", jt, -0.385, -0.305));
  const double cf200 = s.at("CF", 200).bias, cf2000 = s.at("CF", 2000).bias;
  v.check(std::abs(cf200 - 0.059) <= 0.03, in_range("bias(CF) n=200", cf200, 0.029, 0.089));
  v.check(std::abs(cf2000 - 0.006) <= 0.015, in_range("bias(CF) n=2000", cf2000, -0.009, 0.021));
  v.check(cf2000 < cf200, "bias(CF) decreases from n=200 to n=2000: " + fmt("%.4f", cf200) + " -> " + fmt("%.4f", cf2000));
  v.note("wall time " + fmt("%.1f", s.seconds) + " s with " + std::to_string(workers) +
         " worker(s); the 5 min target is stated for 8 cores");
}

void criterion2(Verdict& v, int workers) {
  // Coverage bands are a few points wide, so R = 1000 keeps the Monte Carlo
  // standard error near 0.8 points.
  const Study s = run_study("ex1-normal", {"2S@lbb", "2S@par", "PS@true"}, {200, 500}, 1000, 1000, workers);
  healthy(v, s);
  for (Eigen::Index n : {200, 500}) {
    const double lbb = s.at("2S@lbb", n).coverage;
    v.check(lbb >= 91 && lbb <= 97, in_range("coverage(2S@lbb) n=" + std::to_string(n), lbb, 91, 97));
    const double par = s.at("2S@par", n).coverage;
    v.check(par >= 99, in_range("coverage(2S@par) n=" + std::to_string(n), par, 99, 100));
  }
  const double ps = s.at("PS@true", 200).rmse, lbb = s.at("2S@lbb", 200).rmse;
  v.check(ps > 3 * lbb, "rmse(PS@true) n=200 = " + fmt("%.4f", ps) + " > 3 x rmse(2S@lbb) = " + fmt("%.4f", 3 * lbb));
}

void criterion3(Verdict& v, int workers) {
  const double target[3] = {0.086, 0.087, 0.101};
  for (int k = 0; k < 3; ++k) {
    const std::string scenario = "ex2-s" + std::to_string(k + 1);
    const Study s = run_study(scenario, {"2S@lbb", "2S-ext@lbb"}, {500, 2000}, 250, 1000, workers);
    healthy(v, s);
    for (Eigen::Index n : {500, 2000}) {
      const double c = s.at("2S@lbb", n).coverage;
      v.check(c >= 89 && c <= 97, in_range(scenario + " coverage(2S@lbb) n=" + std::to_string(n), c, 89, 97));
    }
    const double r = s.at("2S-ext@lbb", 2000).rmse;
    v.check(std::abs(r - target[k]) <= 0.02,
            in_range(scenario + " rmse(2S-ext@lbb) n=2000", r, target[k] - 0.02, target[k] + 0.02));
  }
}

void criterion4(Verdict& v, int workers) {
  const std::vector<Eigen::Index> ns{100, 200, 500, 1000};
  const Study s = run_study("appB-normal-z", {"UN", "PS", "2S", "CF"}, ns, 500, 1000, workers);
  healthy(v, s);
  v.check(std::abs(s.at("2S", 100).bias) <= 0.003, in_range("bias(2S) n=100", s.at("2S", 100).bias, -0.003, 0.003));
  v.check(std::abs(s.at("CF", 100).bias - 0.038) <= 0.01, in_range("bias(CF) n=100", s.at("CF", 100).bias, 0.028, 0.048));
  for (Eigen::Index n : ns) {
    const double ps = s.at("PS", n).rmse, ts = s.at("2S", n).rmse;
    v.check(ps > ts, "rmse(PS) n=" + std::to_string(n) + " = " + fmt("%.4f", ps) + " > rmse(2S) = " + fmt("%.4f", ts));
  }
}

void criterion5(Verdict& v, int workers) {
  const std::vector<Eigen::Index> ns{200, 500, 1000, 2000};
  const Study s = run_study("appB-binary-z", {"Correct", "2S", "2S@lbb"}, ns, 500, 1000, workers);
  healthy(v, s);
  for (Eigen::Index n : ns) {
    const std::string at = " n=" + std::to_string(n);
    const double plug = s.at("2S", n).coverage, bb = s.at("2S@lbb", n).coverage, exact = s.at("Correct", n).coverage;
    v.check(plug >= 78 && plug <= 85, in_range("coverage(2S)" + at, plug, 78, 85));
    v.check(bb >= 92 && bb <= 97, in_range("coverage(2S@lbb)" + at, bb, 92, 97));
    v.check(exact >= 93 && exact <= 97, in_range("coverage(Correct)" + at, exact, 93, 97));
  }
}

void criterion6(Verdict& v, int workers) {
  const Study s = run_study("ex3-hetero", {"2S-hetero@lbb"}, {2000}, 500, 1000, workers);
  healthy(v, s);
  const auto& row = s.at("2S-hetero@lbb", 2000);
  v.check(std::abs(row.bias) <= 0.03, in_range("bias(2S-hetero@lbb) n=2000", row.bias, -0.03, 0.03));
  v.check(row.coverage >= 91 && row.coverage <= 97, in_range("coverage(2S-hetero@lbb) n=2000", row.coverage, 91, 97));
}

void criterion7(Verdict& v, int workers) {
  const Study s = run_study("msm-2stage", {"MSM", "MSM-naive"}, {10000}, 20, 1000, workers);
  healthy(v, s);
  const char* cells[4] = {"m00", "m10", "m01", "m11"};
  const double truth[4] = {-1, 1, 0, 2};
  for (int c = 0; c < 4; ++c) {
    const double mean = s.at(std::string("MSM:") + cells[c], 10000).bias + truth[c];
    v.check(std::abs(mean - truth[c]) <= 0.1,
            in_range(std::string("mean posterior mean MSM:") + cells[c], mean, truth[c] - 0.1, truth[c] + 0.1));
  }
  // z1 contrasts of the plug-in: truth 2, plug-in slope 1.
  const std::pair<const char*, const char*> contrasts[2] = {{"m10", "m00"}, {"m11", "m01"}};
  for (const auto& [hi, lo] : contrasts) {
    const auto a = s.points(std::string("MSM-naive:") + hi, 10000), b = s.points(std::string("MSM-naive:") + lo, 10000);
    double err = 0.0;
    int k = 0;
    for (const auto& [rep, p] : a)
      if (b.count(rep)) {
        err += p - b.at(rep) - 2.0;
        ++k;
      }
    err = k ? err / k : std::nan("");
    v.check(std::abs(err + 1.0) <= 0.25, in_range(std::string("plug-in error of ") + hi + "-" + lo, err, -1.25, -0.75));
  }
}

void criterion8(Verdict& v, int workers) {
  const Study s = run_study("dr-poisson", {"DR-misY", "DR-misPS", "POIS-naive"}, {5000}, 100, 200, workers);
  healthy(v, s);
  const double my = s.at("DR-misY", 5000).bias, mp = s.at("DR-misPS", 5000).bias, naive = s.at("POIS-naive", 5000).bias;
  v.check(std::abs(my) <= 0.05, in_range("mean psi - psi0, wrong outcome model", my, -0.05, 0.05));
  v.check(std::abs(mp) <= 0.05, in_range("mean psi - psi0, wrong propensity model", mp, -0.05, 0.05));
  v.check(std::abs(naive) > 0.05, "mean psi - psi0, plain Poisson with wrong outcome model = " + fmt("%.4f", naive) +
                                      " outside [-0.05, 0.05]");
}

void criterion9(Verdict& v, int) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto wls = suite::wls_vs_normal_equations(100, 901);
  v.check(wls.instances == 100 && wls.error < 1e-10,
          "wls_fit vs normal equations, 100 instances, worst relative error " + fmt("%.2e", wls.error) + " < 1e-10");
  const auto logit = suite::wlogit_vs_grid(100, 902);
  v.check(logit.instances == 100 && logit.error < 1e-6,
          "wlogit_fit vs nested grid, 100 instances, worst error " + fmt("%.2e", logit.error) + " < 1e-6");
  const auto ee = suite::estimating_equation_vs_grid(100, 903);
  v.check(ee.instances == 100 && ee.error < 1e-5,
          "solve_estimating_equation vs |score|^2 grid, 100 instances, worst error " + fmt("%.2e", ee.error) + " < 1e-5");
  const auto lin = suite::linear_score_roots(100, 904);
  v.check(lin.error < 1e-9, "solve_estimating_equation on linear scores, worst error " + fmt("%.2e", lin.error) + " < 1e-9");
  for (int n : {2, 5, 10}) {
    const auto d = suite::dirichlet_moments(n, 100000, 905 + static_cast<std::uint64_t>(n));
    v.check(d.max_mean_z < 4.0 && d.max_var_z < 4.0,
            "Dirichlet(1,...,1) n=" + std::to_string(n) + " moments: max |z| mean " + fmt("%.2f", d.max_mean_z) +
                ", variance " + fmt("%.2f", d.max_var_z) + " < 4");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.check(secs < 30.0, "runtime " + fmt("%.1f", secs) + " s < 30 s");
}

std::string replicates_text(const ReplicationResult& r) {
  std::ostringstream os;
  write_replicates_csv(os, r.replicates);
  return os.str();
}

std::string metrics_text(ReplicationResult r) {
  for (auto& row : r.rows) row.wall_time = 0.0;
  std::ostringstream os;
  write_metrics_csv(os, r.rows);
  return os.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Drops the wall_time column, the only field that measures the machine.
std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (i != 9) out << (i ? "," : "") << cells[i];
    out << '\n';
  }
  return out.str();
}

void criterion10(Verdict& v, int) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> groups{
      {"ex2-s1", {"JT", "CF", "2S", "2S@lbb", "CF@ubb", "CF@par", "IPW"}},
      {"ex1-normal", {"JT", "CF", "2S", "2S@lbb", "PS@true"}},
      {"att-const", {"ATT"}},
      {"dr-poisson", {"DR", "POIS-naive"}},
      {"msm-2stage", {"MSM", "MSM-naive"}},
  };
  for (const auto& [scenario, tokens] : groups) {
    const ScenarioSpec& spec = find_scenario(scenario);
    std::vector<EstimatorSpec> ests;
    for (const auto& t : tokens) ests.push_back(parse_estimator(t, 60));
    // Engine level: the same dataset and stream give the same draws.
    const Dataset data = generate_dataset(spec, 300, 77);
    for (const auto& e : ests) {
      std::ostringstream a, b;
      run_estimator(e, spec, data, CounterRng(78)).write_csv(a);
      run_estimator(e, spec, data, CounterRng(78)).write_csv(b);
      v.check(a.str() == b.str(), scenario + " " + e.label + " (" + engine_name(e.engine) + ") draws replay byte for byte");
    }
    // Harness level across worker counts.
    const auto one = run_replicates(spec, ests, {150, 300}, 4, kSeed, 1);
    for (int w : {2, 4}) {
      const auto many = run_replicates(spec, ests, {150, 300}, 4, kSeed, w);
      v.check(replicates_text(one) == replicates_text(many) && metrics_text(one) == metrics_text(many),
              scenario + " harness outputs identical with 1 and " + std::to_string(w) + " workers");
    }
  }
  // Full command: the files written by `run`.
  const auto base = std::filesystem::temp_directory_path() / "causalbb-acceptance-c10";
  std::string first_replicates, first_metrics;
  for (int w : {1, 3}) {
    RunConfig c = parse_config_text(
        "[study]\nscenarios = ex2-s2\nestimators = 2S, 2S@lbb, CF@ubb, IPW, ATT\nn = 120\nR = 3\nL = 40\n", "c10");
    c.workers = w;
    c.master_seed = kSeed;
    c.output_dir = (base / std::to_string(w)).string();
    std::ostringstream out, err;
    cmd_run(c, out, err);
    const std::string reps = read_file(base / std::to_string(w) / "replicates.csv");
    const std::string mets = strip_wall_time(read_file(base / std::to_string(w) / "metrics.csv"));
    if (w == 1) {
      first_replicates = reps;
      first_metrics = mets;
    } else {
      v.check(!reps.empty() && reps == first_replicates, "run: replicates.csv byte-identical with 1 and 3 workers");
      v.check(!mets.empty() && mets == first_metrics,
              "run: metrics.csv byte-identical with 1 and 3 workers outside the wall_time column");
    }
  }
  std::filesystem::remove_all(base);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  int only = 0;
  int workers = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-10); all when omitted")->check(CLI::Range(1, 10));
  app.add_option("--workers", workers, "Worker threads for the replication studies (0: all cores)");
  CLI11_PARSE(app, argc, argv);
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  using Fn = void (*)(Verdict&, int);
  const std::vector<std::pair<int, Fn>> criteria{{1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
                                                 {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8},
                                                 {9, criterion9}, {10, criterion10}};
  bool all_ok = true;
  for (const auto& [k, fn] : criteria) {
    if (only && k != only) continue;
    Verdict v{k};
    std::printf("criterion %d\n", k);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(v, workers);
    } catch (const std::exception& e) {
      v.check(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("CRITERION %d %s (%.1f s)\n", k, v.ok ? "PASS" : "FAIL", secs);
    std::fflush(stdout);
    all_ok = all_ok && v.ok;
  }
  return all_ok ? 0 : 1;
}
