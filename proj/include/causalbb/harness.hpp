#pragma once

// Replication driver: estimator selection, replicate loop, metrics and the
// balance diagnostic.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "causalbb/bboot.hpp"
#include "causalbb/designs.hpp"
#include "causalbb/draws.hpp"

namespace causalbb {

enum class Engine {
  ParametricJT,
  ParametricCF,
  Parametric2S,
  BBTwoStep,
  BBCutFeedback,
  BBIpw,
  BBAtt,
  BBDrPoisson,
  BBMsm,
  BBNaiveMsm,
};

std::string engine_name(Engine engine);

/// One estimator row of a replication study, parsed from a token such as
/// "2S", "2S-ext@lbb", "CF@ubb", "PS@true", "IPW", "DR-misY" or "MSM".
struct EstimatorSpec {
  std::string label;
  Engine engine = Engine::Parametric2S;
  DesignTag design = DesignTag::TwoStep;
  /// Exposure source of the score-regression bootstrap engines.
  GammaSource source = GammaSource::Linked;
  bool doubly_robust = true;
  /// Outcome terms reduced to the raw confounders (Poisson engines).
  bool misspecified_outcome = false;
  /// Exposure terms reduced to the raw confounders.
  bool misspecified_propensity = false;
  /// Draw columns scored against the truth, in truth order.
  std::vector<std::string> targets{"ate"};
  int L = 1000;
  /// Upper clamp on inverse-probability case weights.
  std::optional<double> clamp;
};

/// Throws InvalidArgument for an unknown token.
EstimatorSpec parse_estimator(const std::string& token, int L = 1000, std::optional<double> clamp = std::nullopt);

struct EstimatorHelp {
  std::string token;
  std::string engine;
  std::string description;
};
/// Token grammar for the `estimators` command.
std::vector<EstimatorHelp> estimator_catalog();

/// Throws ValidationError when the estimator cannot run on the scenario.
void check_compatible(const EstimatorSpec& est, const ScenarioSpec& spec);

/// Truth for each target of the estimator.
Eigen::VectorXd estimator_truth(const EstimatorSpec& est, const ScenarioSpec& spec);

/// Runs one estimator on one dataset.
PosteriorDraws run_estimator(const EstimatorSpec& est, const ScenarioSpec& spec, const Dataset& data,
                             const CounterRng& rng);

std::uint64_t dataset_seed(std::uint64_t master, const std::string& scenario, Eigen::Index n, int replicate);
std::uint64_t inference_seed(std::uint64_t master, const std::string& scenario, const std::string& estimator,
                             Eigen::Index n, int replicate);

struct Metrics {
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
};

/// Bias, population sd, RMSE and closed-interval coverage (percent).
Metrics compute_metrics(const std::vector<double>& points, const std::vector<DrawSummary>& cis, double truth);

enum class CellStatus { Ok, Unreliable, Failed };
std::string cell_status_name(CellStatus status);

struct MetricsRow {
  std::string scenario;
  std::string estimator;
  Eigen::Index n = 0;
  /// Replicates entering the metrics.
  int R = 0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  long flagged_draws = 0;
  double wall_time = 0.0;
  int failures = 0;
  CellStatus status = CellStatus::Ok;
};

struct ReplicateRecord {
  std::string scenario;
  std::string estimator;
  Eigen::Index n = 0;
  int replicate = 0;
  bool failed = false;
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::string error;
};

struct ReplicationResult {
  std::vector<MetricsRow> rows;
  std::vector<ReplicateRecord> replicates;
  [[nodiscard]] bool any_failed() const;
};

/// R replicates of every (estimator, n) cell. Each replicate draws its own
/// dataset and inference stream, so results do not depend on `workers`.
/// Estimators with several targets yield one row per target, labelled
/// "token:target". A cell stops after three consecutive failed replicates and
/// is marked failed; more than 1% failures marks it unreliable.
ReplicationResult run_replicates(const ScenarioSpec& spec, const std::vector<EstimatorSpec>& estimators,
                                 const std::vector<Eigen::Index>& n_list, int R, std::uint64_t master_seed,
                                 int workers = 1);

inline constexpr const char* kMetricsHeader =
    "scenario,estimator,n,R,bias,sd,rmse,coverage,flagged_draws,wall_time,failures,status";
inline constexpr const char* kReplicateHeader = "scenario,estimator,n,replicate,point,ci_lo,ci_hi,status";

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
void write_replicates_csv(std::ostream& os, const std::vector<ReplicateRecord>& records);

struct BalanceStat {
  std::string covariate;
  double estimate = 0.0;
  double standard_error = 0.0;
};

enum class BalanceMode { Regression, Strata };

/// Covariate imbalance given a candidate propensity score. Regression mode
/// fits z on an intercept and the covariates with logit(score) as an offset
/// and reports the covariate coefficients; strata mode reports the
/// size-weighted mean difference (treated minus control) within score
/// quantile strata. Throws Separation.
std::vector<BalanceStat> balance_diagnostic(const Dataset& data, const Eigen::VectorXd& score,
                                            BalanceMode mode = BalanceMode::Regression, int n_strata = 5);

}  // namespace causalbb
