#pragma once

// Scenario registry and samplers for the simulation studies.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "causalbb/rng.hpp"

namespace causalbb {

/// Product of confounder columns (0-based indices); empty means the constant 1.
using Monomial = std::vector<int>;
using Terms = std::vector<Monomial>;

std::string term_name(const Monomial& term);
/// Evaluates each term on every row of x; result is n x terms.size().
Eigen::MatrixXd expand_terms(const Eigen::MatrixXd& x, const Terms& terms);
Terms raw_confounders(int p, bool with_intercept);

enum class TreatmentFamily { LinearNormal, LogisticBernoulli, TwoStageSequential };
enum class OutcomeFamily { Normal, Poisson };
enum class EstimandKind { ATE, ATT, LogRateRatio, CounterfactualMeans };
/// Scale on which the fitted exposure model is used as a balancing score.
enum class ScoreScale { Mean, Probability, LinearPredictor };

/// Two binary treatments given sequentially (the marginal structural model
/// example): X1 ~ N(x1_mean, x1_sd^2), Z1 ~ Bern(expit(g1 . (1, X1))),
/// X2 ~ N(x2_coef . (1, X1, Z1), x2_sd^2), Z2 ~ Bern(expit(g2 . (1, X2))),
/// Y ~ N(y_coef . (1, X1, Z1, X2, Z2), y_sd^2).
struct SequentialLaw {
  double x1_mean = 1.0;
  double x1_sd = 1.0;
  Eigen::Vector2d g1{-2.0, 1.0};
  Eigen::Vector3d x2_coef{-3.0, 1.0, 1.0};
  double x2_sd = 1.0;
  Eigen::Vector2d g2{2.0, -1.0};
  Eigen::Matrix<double, 5, 1> y_coef = (Eigen::Matrix<double, 5, 1>() << 0.0, 1.0, 1.0, 1.0, 1.0).finished();
  double y_sd = 1.0;

  /// E[Y(z1, z2)] for the four cells in the order (00, 10, 01, 11).
  [[nodiscard]] Eigen::Vector4d counterfactual_means() const;
};

struct ScenarioSpec {
  std::string name;
  std::string description;
  int p = 0;

  Eigen::VectorXd x_mean;
  Eigen::MatrixXd x_cov;
  /// Lower Cholesky factor of x_cov, filled by finalize().
  Eigen::MatrixXd x_chol;

  TreatmentFamily treatment_family = TreatmentFamily::LogisticBernoulli;
  Terms treatment_terms;
  Eigen::VectorXd gamma;
  double treatment_sd = 1.0;
  SequentialLaw sequential;

  OutcomeFamily outcome_family = OutcomeFamily::Normal;
  /// Treatment-free mean sum_k xi_k * m_k(x).
  Terms outcome_terms;
  Eigen::VectorXd xi;
  /// Treatment effect z * sum_k psi_k * m_k(x).
  Terms effect_terms;
  Eigen::VectorXd psi;
  double outcome_sd = 1.0;

  /// Exposure model fitted by the estimators; a superset of treatment_terms.
  Terms analysis_treatment_terms;
  ScoreScale score_scale = ScoreScale::Probability;
  EstimandKind estimand = EstimandKind::ATE;

  /// Number of treatment columns in generated datasets.
  [[nodiscard]] int treatment_columns() const {
    return treatment_family == TreatmentFamily::TwoStageSequential ? 2 : 1;
  }
  [[nodiscard]] bool binary_treatment() const { return treatment_family != TreatmentFamily::LinearNormal; }

  /// True exposure coefficients expressed in the analysis_treatment_terms basis.
  [[nodiscard]] Eigen::VectorXd analysis_gamma() const;

  /// Effect-modifier variant of the registry entry with a homogeneous effect tau.
  [[nodiscard]] ScenarioSpec with_effect(double tau) const;
  /// Same scenario with treatment assigned independently of x at probability expit(intercept).
  [[nodiscard]] ScenarioSpec randomized(double intercept = 0.0) const;

  /// Factors the covariance and checks the invariants; throws InvalidArgument.
  void finalize();
};

struct Dataset {
  Eigen::MatrixXd x;
  /// n x 1, or n x 2 for sequential treatments.
  Eigen::MatrixXd z;
  Eigen::VectorXd y;
  std::string scenario;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index n() const { return x.rows(); }
  [[nodiscard]] Eigen::Index p() const { return x.cols(); }
  [[nodiscard]] Eigen::VectorXd treatment() const { return z.col(0); }

  /// Throws InvalidArgument when lengths disagree, values are non-finite or a
  /// binary treatment has values other than 0/1.
  void validate(bool binary_treatment) const;
  bool operator==(const Dataset&) const = default;
};

/// All registered scenarios, in registry order.
const std::vector<ScenarioSpec>& list_scenarios();
/// Throws UnknownScenario.
const ScenarioSpec& find_scenario(const std::string& name);

/// Deterministic given (spec, n, seed). Requires n >= p + 2.
Dataset generate_dataset(const ScenarioSpec& spec, Eigen::Index n, std::uint64_t seed);
Dataset generate_dataset(const std::string& scenario, Eigen::Index n, std::uint64_t seed);

struct OracleResult {
  Eigen::VectorXd estimate;
  Eigen::VectorXd standard_error;
};

/// Monte Carlo counterfactual oracle: simulates potential outcomes from the
/// structural equations and averages the scenario's estimand.
OracleResult counterfactual_oracle(const ScenarioSpec& spec, std::int64_t draws, std::uint64_t seed);

/// Analytic truth where available (Gaussian moments up to degree two, the
/// sequential design, constant effects); otherwise a cached 1e7-draw oracle.
Eigen::VectorXd true_estimand(const ScenarioSpec& spec);

void write_dataset_csv(std::ostream& os, const Dataset& data);
/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace causalbb
