#include "causalbb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "causalbb/errors.hpp"
#include "causalbb/posterior.hpp"

namespace causalbb {

namespace {

const std::vector<std::string> kMsmCells{"m00", "m10", "m01", "m11"};

bool constant_effect(const ScenarioSpec& spec) {
  return spec.effect_terms.size() == 1 && spec.effect_terms[0].empty();
}

TreatmentModel model_for(const EstimatorSpec& est, const ScenarioSpec& spec) {
  TreatmentModel model = make_treatment_model(spec);
  if (est.misspecified_propensity) {
    model.terms = raw_confounders(spec.p, true);
    model.true_gamma = Eigen::VectorXd();
  }
  return model;
}

}  // namespace

std::string engine_name(Engine engine) {
  switch (engine) {
    case Engine::ParametricJT: return "parametric-JT";
    case Engine::ParametricCF: return "parametric-CF";
    case Engine::Parametric2S: return "parametric-2S";
    case Engine::BBTwoStep: return "bb-two-step";
    case Engine::BBCutFeedback: return "bb-cut-feedback";
    case Engine::BBIpw: return "bb-ipw";
    case Engine::BBAtt: return "bb-att";
    case Engine::BBDrPoisson: return "bb-dr-poisson";
    case Engine::BBMsm: return "bb-msm";
    case Engine::BBNaiveMsm: return "bb-naive-msm";
  }
  return "unknown";
}

EstimatorSpec parse_estimator(const std::string& token, int L, std::optional<double> clamp) {
  if (L < 1) throw InvalidArgument("estimator " + token + ": L must be positive");
  EstimatorSpec est;
  est.label = token;
  est.L = L;
  est.clamp = clamp;
  if (token == "IPW") {
    est.engine = Engine::BBIpw;
    return est;
  }
  if (token == "ATT") {
    est.engine = Engine::BBAtt;
    est.targets = {"att"};
    return est;
  }
  if (token == "DR" || token == "DR-misY" || token == "DR-misPS" || token == "POIS-naive") {
    est.engine = Engine::BBDrPoisson;
    est.targets = {"psi"};
    est.doubly_robust = token != "POIS-naive";
    est.misspecified_outcome = token == "DR-misY" || token == "POIS-naive";
    est.misspecified_propensity = token == "DR-misPS";
    return est;
  }
  if (token == "MSM" || token == "MSM-naive") {
    est.engine = token == "MSM" ? Engine::BBMsm : Engine::BBNaiveMsm;
    est.targets = kMsmCells;
    return est;
  }
  if (token == "IPW-misPS" || token == "ATT-misPS") {
    est = parse_estimator(token.substr(0, 3), L, clamp);
    est.label = token;
    est.misspecified_propensity = true;
    return est;
  }

  const auto at = token.find('@');
  est.design = parse_design(token.substr(0, at));
  if (at == std::string::npos) {
    est.engine = is_joint(est.design) ? Engine::ParametricJT
                 : is_cut(est.design) ? Engine::ParametricCF
                                      : Engine::Parametric2S;
    return est;
  }
  const std::string source = token.substr(at + 1);
  if (is_joint(est.design)) throw InvalidArgument("estimator " + token + ": joint designs have no bootstrap form");
  const bool cut = is_cut(est.design);
  est.engine = cut ? Engine::BBCutFeedback : Engine::BBTwoStep;
  if (source == "lbb") {
    est.source = GammaSource::Linked;
  } else if (source == "ubb") {
    est.source = cut ? GammaSource::UnlinkedDraw : GammaSource::UnlinkedMean;
  } else if (source == "par") {
    est.source = cut ? GammaSource::ParametricDraw : GammaSource::ParametricMean;
  } else if (source == "true") {
    est.source = GammaSource::True;
  } else {
    throw InvalidArgument("estimator " + token + ": unknown exposure source '" + source + "'");
  }
  return est;
}

std::vector<EstimatorHelp> estimator_catalog() {
  std::vector<EstimatorHelp> out;
  for (DesignTag tag : all_designs()) {
    const std::string name = design_name(tag);
    const std::string engine =
        engine_name(is_joint(tag) ? Engine::ParametricJT : is_cut(tag) ? Engine::ParametricCF : Engine::Parametric2S);
    out.push_back({name, engine, "conjugate/Metropolis posterior with the " + name + " outcome design"});
  }
  for (DesignTag tag : all_designs()) {
    if (is_joint(tag)) continue;
    const std::string name = design_name(tag);
    const std::string engine = engine_name(is_cut(tag) ? Engine::BBCutFeedback : Engine::BBTwoStep);
    out.push_back({name + "@lbb", engine, "bootstrap outcome, exposure refit under the same weights"});
    out.push_back({name + "@ubb", engine,
                   is_cut(tag) ? "bootstrap outcome, exposure refit under independent weights"
                               : "bootstrap outcome, mean of an independent exposure bootstrap"});
    out.push_back({name + "@par", engine,
                   is_cut(tag) ? "bootstrap outcome, parametric exposure posterior draws"
                               : "bootstrap outcome, parametric exposure posterior mean"});
    out.push_back({name + "@true", engine, "bootstrap outcome, true exposure coefficients"});
  }
  out.push_back({"IPW", engine_name(Engine::BBIpw), "inverse probability weighting, target ate"});
  out.push_back({"IPW-misPS", engine_name(Engine::BBIpw), "IPW with main-effects exposure model"});
  out.push_back({"ATT", engine_name(Engine::BBAtt), "treatment effect on the treated, target att"});
  out.push_back({"ATT-misPS", engine_name(Engine::BBAtt), "ATT with main-effects exposure model"});
  out.push_back({"DR", engine_name(Engine::BBDrPoisson), "doubly robust Poisson score, target psi"});
  out.push_back({"DR-misY", engine_name(Engine::BBDrPoisson), "DR with main-effects outcome columns"});
  out.push_back({"DR-misPS", engine_name(Engine::BBDrPoisson), "DR with main-effects exposure model"});
  out.push_back({"POIS-naive", engine_name(Engine::BBDrPoisson),
                 "plain Poisson score with main-effects outcome columns"});
  out.push_back({"MSM", engine_name(Engine::BBMsm), "sequential weights, targets m00 m10 m01 m11"});
  out.push_back({"MSM-naive", engine_name(Engine::BBNaiveMsm), "outcome-regression plug-in, same targets"});
  return out;
}

void check_compatible(const EstimatorSpec& est, const ScenarioSpec& spec) {
  const auto fail = [&](const std::string& why) {
    throw ValidationError("estimator " + est.label + " on " + spec.name + ": " + why);
  };
  const bool sequential = spec.treatment_family == TreatmentFamily::TwoStageSequential;
  const bool poisson = spec.outcome_family == OutcomeFamily::Poisson;
  switch (est.engine) {
    case Engine::BBMsm:
    case Engine::BBNaiveMsm:
      if (!sequential) fail("requires a sequential-treatment scenario");
      return;
    case Engine::BBDrPoisson:
      if (!poisson) fail("requires a count outcome");
      return;
    default:
      break;
  }
  if (sequential) fail("sequential scenarios only support MSM estimators");
  if (poisson) fail("count-outcome scenarios only support the Poisson estimators");
  if ((est.engine == Engine::BBIpw || est.engine == Engine::BBAtt) && !spec.binary_treatment())
    fail("requires a binary treatment");
  const bool wants_att = est.engine == Engine::BBAtt;
  const bool has_att = spec.estimand == EstimandKind::ATT;
  if (wants_att != has_att && !constant_effect(spec)) fail("scenario estimand does not match the target");
}

Eigen::VectorXd estimator_truth(const EstimatorSpec& est, const ScenarioSpec& spec) {
  const Eigen::VectorXd truth = true_estimand(spec);
  if (static_cast<Eigen::Index>(est.targets.size()) != truth.size())
    throw ValidationError("estimator " + est.label + ": target count does not match the scenario estimand");
  return truth;
}

PosteriorDraws run_estimator(const EstimatorSpec& est, const ScenarioSpec& spec, const Dataset& data,
                             const CounterRng& rng) {
  // Sequential engines fit their own exposure models.
  if (est.engine == Engine::BBMsm) return bb_msm(data, est.L, rng, est.clamp);
  if (est.engine == Engine::BBNaiveMsm) return bb_naive_msm(data, est.L, rng);
  const TreatmentModel model = model_for(est, spec);
  const auto design = [&] { return make_outcome_design(est.design, spec); };
  CounterRng stream = rng;
  switch (est.engine) {
    case Engine::ParametricJT:
      return joint_gibbs(data, design(), model, est.L, stream);
    case Engine::ParametricCF:
      return cut_feedback_draws(data, design(), model, est.L, stream);
    case Engine::Parametric2S:
      return two_step_draws(data, design(), model, est.L, stream);
    case Engine::BBTwoStep:
    case Engine::BBCutFeedback:
      return bb_score_regression(data, design(), model, est.source, est.L, rng);
    case Engine::BBIpw:
      return bb_ipw(data, model, CaseWeightRule{CaseWeightRule::Kind::IPW, est.clamp}, est.L, rng);
    case Engine::BBAtt:
      return bb_att(data, model, est.L, rng, est.clamp);
    case Engine::BBDrPoisson: {
      const Terms terms = est.misspecified_outcome ? raw_confounders(spec.p, true) : spec.outcome_terms;
      PoissonOptions opt;
      opt.doubly_robust = est.doubly_robust;
      return bb_dr_poisson(data, terms, model, est.L, rng, opt);
    }
    case Engine::BBMsm:
    case Engine::BBNaiveMsm:
      break;
  }
  throw InvalidArgument("run_estimator: unknown engine");
}

std::uint64_t dataset_seed(std::uint64_t master, const std::string& scenario, Eigen::Index n, int replicate) {
  return derive_seed({master, hash_name(scenario), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate)});
}

std::uint64_t inference_seed(std::uint64_t master, const std::string& scenario, const std::string& estimator,
                             Eigen::Index n, int replicate) {
  return derive_seed({master, hash_name(scenario), hash_name(estimator), static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(replicate)});
}

Metrics compute_metrics(const std::vector<double>& points, const std::vector<DrawSummary>& cis, double truth) {
  if (points.empty() || points.size() != cis.size())
    throw InvalidArgument("compute_metrics: need equal, nonzero numbers of points and intervals");
  const double r = static_cast<double>(points.size());
  double mean = 0.0;
  for (double p : points) mean += p;
  mean /= r;
  double var = 0.0, mse = 0.0;
  int covered = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    var += (points[i] - mean) * (points[i] - mean);
    mse += (points[i] - truth) * (points[i] - truth);
    if (cis[i].lo <= truth && truth <= cis[i].hi) ++covered;
  }
  Metrics m;
  m.bias = mean - truth;
  m.sd = std::sqrt(var / r);
  m.rmse = std::sqrt(mse / r);
  m.coverage = 100.0 * covered / r;
  return m;
}

std::string cell_status_name(CellStatus status) {
  switch (status) {
    case CellStatus::Ok: return "ok";
    case CellStatus::Unreliable: return "unreliable";
    case CellStatus::Failed: return "failed";
  }
  return "unknown";
}

bool ReplicationResult::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.status == CellStatus::Failed; });
}

namespace {

struct Outcome {
  bool done = false;
  bool failed = false;
  std::string error;
  std::vector<DrawSummary> summaries;
  long flagged = 0;
  double seconds = 0.0;
};

struct Cell {
  const EstimatorSpec* est = nullptr;
  Eigen::Index n = 0;
  Eigen::VectorXd truth;
  std::vector<Outcome> outcomes;
  /// Last replicate of the earliest known failure run; later ones are skipped.
  std::atomic<int> abort_after{std::numeric_limits<int>::max()};
};

constexpr int kAbortRun = 3;

// First index that starts a run of kAbortRun failed replicates, or -1.
int first_failure_run(const std::vector<Outcome>& outcomes) {
  int run = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].done) return -1;
    run = outcomes[i].failed ? run + 1 : 0;
    if (run == kAbortRun) return static_cast<int>(i) - kAbortRun + 1;
  }
  return -1;
}

// Last index of the first run of kAbortRun completed failures, or -1.
int failure_run_end(const std::vector<Outcome>& outcomes) {
  int run = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    run = outcomes[i].done && outcomes[i].failed ? run + 1 : 0;
    if (run == kAbortRun) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

ReplicationResult run_replicates(const ScenarioSpec& spec, const std::vector<EstimatorSpec>& estimators,
                                 const std::vector<Eigen::Index>& n_list, int R, std::uint64_t master_seed,
                                 int workers) {
  if (estimators.empty()) throw ValidationError("run_replicates: no estimators");
  if (n_list.empty()) throw ValidationError("run_replicates: no sample sizes");
  if (R < 1) throw ValidationError("run_replicates: R must be at least 1");
  for (Eigen::Index n : n_list)
    if (n < spec.p + 2) throw ValidationError("run_replicates: n too small for " + spec.name);

  std::vector<std::unique_ptr<Cell>> cells;
  for (const auto& est : estimators) {
    check_compatible(est, spec);
    const Eigen::VectorXd truth = estimator_truth(est, spec);
    for (Eigen::Index n : n_list) {
      auto cell = std::make_unique<Cell>();
      cell->est = &est;
      cell->n = n;
      cell->truth = truth;
      cell->outcomes.resize(static_cast<std::size_t>(R));
      cells.push_back(std::move(cell));
    }
  }

  const std::size_t total = cells.size() * static_cast<std::size_t>(R);
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::exception_ptr fatal;

  auto work = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= total) return;
      Cell& cell = *cells[task / static_cast<std::size_t>(R)];
      const int rep = static_cast<int>(task % static_cast<std::size_t>(R));
      if (rep > cell.abort_after.load()) continue;
      Outcome out;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Dataset data = generate_dataset(spec, cell.n, dataset_seed(master_seed, spec.name, cell.n, rep));
        const CounterRng rng(inference_seed(master_seed, spec.name, cell.est->label, cell.n, rep));
        const PosteriorDraws draws = run_estimator(*cell.est, spec, data, rng);
        for (const auto& t : cell.est->targets) out.summaries.push_back(summarize_draws(draws, t));
        out.flagged = draws.flagged_draws;
      } catch (const Error& e) {
        out.failed = true;
        out.error = e.what();
        out.summaries.clear();
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        next.store(total);
        return;
      }
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.done = true;
      std::lock_guard lock(mutex);
      cell.outcomes[static_cast<std::size_t>(rep)] = std::move(out);
      if (cell.outcomes[static_cast<std::size_t>(rep)].failed) {
        const int end = failure_run_end(cell.outcomes);
        if (end >= 0 && end < cell.abort_after.load()) cell.abort_after.store(end);
      }
    }
  };

  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  ReplicationResult result;
  for (const auto& cell_ptr : cells) {
    const Cell& cell = *cell_ptr;
    const EstimatorSpec& est = *cell.est;
    // A failed cell is judged on the replicates up to its first run of
    // failures, which every schedule completes.
    const int run = first_failure_run(cell.outcomes);
    const int used = run < 0 ? R : run + kAbortRun;
    int failures = 0;
    long flagged = 0;
    double seconds = 0.0;
    for (int r = 0; r < used; ++r) {
      const Outcome& o = cell.outcomes[static_cast<std::size_t>(r)];
      failures += o.failed ? 1 : 0;
      flagged += o.flagged;
      seconds += o.seconds;
    }
    const CellStatus status = run >= 0                                 ? CellStatus::Failed
                              : failures > 0 && failures * 100 > R     ? CellStatus::Unreliable
                                                                       : CellStatus::Ok;
    for (std::size_t k = 0; k < est.targets.size(); ++k) {
      const std::string label = est.targets.size() == 1 ? est.label : est.label + ":" + est.targets[k];
      std::vector<double> points;
      std::vector<DrawSummary> cis;
      for (int r = 0; r < used; ++r) {
        const Outcome& o = cell.outcomes[static_cast<std::size_t>(r)];
        ReplicateRecord rec;
        rec.scenario = spec.name;
        rec.estimator = label;
        rec.n = cell.n;
        rec.replicate = r;
        rec.failed = o.failed;
        rec.error = o.error;
        if (!o.failed) {
          rec.point = o.summaries[k].point;
          rec.lo = o.summaries[k].lo;
          rec.hi = o.summaries[k].hi;
          points.push_back(rec.point);
          cis.push_back(o.summaries[k]);
        }
        result.replicates.push_back(std::move(rec));
      }
      MetricsRow row;
      row.scenario = spec.name;
      row.estimator = label;
      row.n = cell.n;
      row.R = static_cast<int>(points.size());
      row.flagged_draws = flagged;
      row.wall_time = seconds;
      row.failures = failures;
      row.status = status;
      if (points.empty()) {
        row.bias = row.sd = row.rmse = row.coverage = std::numeric_limits<double>::quiet_NaN();
      } else {
        const Metrics m = compute_metrics(points, cis, cell.truth[static_cast<Eigen::Index>(k)]);
        row.bias = m.bias;
        row.sd = m.sd;
        row.rmse = m.rmse;
        row.coverage = m.coverage;
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.scenario << ',' << r.estimator << ',' << r.n << ',' << r.R << ',' << format_double(r.bias) << ','
       << format_double(r.sd) << ',' << format_double(r.rmse) << ',' << format_double(r.coverage) << ','
       << r.flagged_draws << ',' << format_double(r.wall_time) << ',' << r.failures << ','
       << cell_status_name(r.status) << '\n';
  }
}

void write_replicates_csv(std::ostream& os, const std::vector<ReplicateRecord>& records) {
  os << kReplicateHeader << '\n';
  for (const auto& r : records) {
    os << r.scenario << ',' << r.estimator << ',' << r.n << ',' << r.replicate << ',';
    if (r.failed) {
      os << ",,,failed\n";
    } else {
      os << format_double(r.point) << ',' << format_double(r.lo) << ',' << format_double(r.hi) << ",ok\n";
    }
  }
}

std::vector<BalanceStat> balance_diagnostic(const Dataset& data, const Eigen::VectorXd& score, BalanceMode mode,
                                            int n_strata) {
  data.validate(true);
  if (data.z.cols() != 1) throw InvalidArgument("balance_diagnostic: single treatment column required");
  const auto n = data.n(), p = data.p();
  if (score.size() != n) throw InvalidArgument("balance_diagnostic: score length mismatch");
  const Eigen::VectorXd z = data.treatment();
  std::vector<BalanceStat> out;

  if (mode == BalanceMode::Regression) {
    constexpr double kEdge = 1e-12;
    Eigen::VectorXd offset(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = std::clamp(score[i], kEdge, 1.0 - kEdge);
      offset[i] = std::log(s / (1.0 - s));
    }
    Eigen::MatrixXd design(n, p + 1);
    design << Eigen::VectorXd::Ones(n), data.x;
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    const auto fit = wlogit_fit(design, z, w, LogitOptions{}, std::nullopt, std::optional<Eigen::VectorXd>(offset));
    const Eigen::VectorXd eta = offset + design * fit.coef;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double b = expit(eta[i]);
      v[i] = b * (1.0 - b);
    }
    const Eigen::MatrixXd info = design.transpose() * v.asDiagonal() * design;
    const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    for (Eigen::Index j = 0; j < p; ++j)
      out.push_back({"x" + std::to_string(j + 1), fit.coef[j + 1], std::sqrt(cov(j + 1, j + 1))});
    return out;
  }

  if (n_strata < 1) throw InvalidArgument("balance_diagnostic: n_strata must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return score[a] < score[b]; });
  Eigen::VectorXd diff = Eigen::VectorXd::Zero(p), var = Eigen::VectorXd::Zero(p);
  double used = 0.0;
  for (int s = 0; s < n_strata; ++s) {
    const auto lo = static_cast<std::size_t>(n * s / n_strata), hi = static_cast<std::size_t>(n * (s + 1) / n_strata);
    Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(p), sum0 = sum1, sq1 = sum1, sq0 = sum1;
    double n1 = 0, n0 = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      const Eigen::VectorXd xi = data.x.row(order[k]).transpose();
      if (z[order[k]] == 1.0) {
        sum1 += xi;
        sq1 += xi.cwiseAbs2();
        ++n1;
      } else {
        sum0 += xi;
        sq0 += xi.cwiseAbs2();
        ++n0;
      }
    }
    if (n1 < 2 || n0 < 2) continue;
    const double size = n1 + n0;
    const Eigen::VectorXd m1 = sum1 / n1, m0 = sum0 / n0;
    const Eigen::VectorXd v1 = (sq1 / n1 - m1.cwiseAbs2()) * (n1 / (n1 - 1));
    const Eigen::VectorXd v0 = (sq0 / n0 - m0.cwiseAbs2()) * (n0 / (n0 - 1));
    diff += size * (m1 - m0);
    var += size * size * (v1 / n1 + v0 / n0);
    used += size;
  }
  if (used == 0) throw Separation("balance_diagnostic: no stratum contains both treatment groups");
  for (Eigen::Index j = 0; j < p; ++j)
    out.push_back({"x" + std::to_string(j + 1), diff[j] / used, std::sqrt(var[j]) / used});
  return out;
}

}  // namespace causalbb
