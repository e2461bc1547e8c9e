#pragma once

// Outcome-model column rules and the fitted exposure model that supplies the
// balancing score.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "causalbb/dgp.hpp"

namespace causalbb {

enum class DesignTag { UN, UNext, JT, JText, CF, CFext, TwoStep, TwoStepExt, Correct, PS, PSext, TwoStepHetero };

std::string design_name(DesignTag tag);
/// Accepts the printed names (UN, UN-ext, ..., 2S-hetero); throws InvalidArgument.
DesignTag parse_design(const std::string& name);
const std::vector<DesignTag>& all_designs();

/// Joint-model tags (JT, JT-ext).
bool is_joint(DesignTag tag);
/// Cutting-feedback tags (CF, CF-ext).
bool is_cut(DesignTag tag);
/// Tags whose outcome model contains the balancing score.
bool uses_score(DesignTag tag);
/// PS / PS-ext: the score is evaluated at the true exposure coefficients.
bool uses_true_score(DesignTag tag);

struct DesignColumn {
  enum class Kind { Intercept, Covariate, Treatment, Score };
  Kind kind;
  /// Modifier m(x); the column is m(x), z * m(x) or b * m(x) by kind.
  Monomial term;
  std::string name;
};

struct OutcomeDesign {
  DesignTag tag = DesignTag::UN;
  std::vector<DesignColumn> columns;

  [[nodiscard]] std::vector<std::string> names() const;
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(columns.size()); }
  [[nodiscard]] bool has_score() const;

  /// n x size() regressor matrix; b is ignored when the design has no score column.
  [[nodiscard]] Eigen::MatrixXd matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& b) const;
  /// n x k matrix of the treatment-effect modifiers, in Treatment-column order.
  [[nodiscard]] Eigen::MatrixXd modifiers(const Eigen::MatrixXd& x) const;
  /// Population effect sum_k tau_k * mean(m_k), given the (possibly
  /// weighted) means of the modifier columns.
  [[nodiscard]] double effect(const Eigen::VectorXd& coef, const Eigen::VectorXd& modifier_means) const;
};

/// Column rule for a tag on a scenario. Correct reproduces the scenario's true
/// treatment-free terms plus z times its effect modifiers; 2S-hetero interacts
/// both z and b with the effect modifiers.
OutcomeDesign make_outcome_design(DesignTag tag, const ScenarioSpec& spec);

/// Fitted exposure model: linear-Normal or logistic in expand_terms(x, terms).
struct TreatmentModel {
  TreatmentFamily family = TreatmentFamily::LogisticBernoulli;
  Terms terms;
  ScoreScale scale = ScoreScale::Probability;
  double prior_sd = 10.0;
  Eigen::VectorXd true_gamma;

  [[nodiscard]] bool binary() const { return family == TreatmentFamily::LogisticBernoulli; }
  [[nodiscard]] Eigen::MatrixXd design(const Eigen::MatrixXd& x) const { return expand_terms(x, terms); }
  /// Balancing score b(x; gamma) on the model's scale, from the exposure design F.
  [[nodiscard]] Eigen::VectorXd score(const Eigen::MatrixXd& f, const Eigen::VectorXd& gamma) const;
  /// Pr[Z = 1 | x] = expit(F gamma); binary models only.
  [[nodiscard]] Eigen::VectorXd propensity(const Eigen::MatrixXd& f, const Eigen::VectorXd& gamma) const;
  [[nodiscard]] std::vector<std::string> names() const;
};

/// The correctly specified analysis exposure model of a scenario.
TreatmentModel make_treatment_model(const ScenarioSpec& spec);

}  // namespace causalbb
