#pragma once

// Bayesian-bootstrap engines. Each posterior draw is the minimizer of a
// Dirichlet-weighted loss, so a draw is a deterministic function of its
// weight vector.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "causalbb/designs.hpp"
#include "causalbb/draws.hpp"
#include "causalbb/numopt.hpp"

namespace causalbb {

enum class StageKind { SquaredError, Logistic, CaseWeightedLeastSquares, EstimatingEquation };
enum class Linkage { Linked, Unlinked };
enum class WeightMode { Dirichlet, Equal };

struct StageInput {
  const Dataset& data;
  /// Weight vector of this stage (primary or secondary stream).
  const Eigen::VectorXd& weights;
  /// Solutions of the earlier stages of the same draw.
  const std::vector<Eigen::VectorXd>& previous;
  int draw = 0;
};

struct StageProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  /// Multiplies the Dirichlet weights; empty means none.
  Eigen::VectorXd case_weights;
  /// Weighted estimating equation (EstimatingEquation stages only).
  ScoreFunction score;
  Eigen::VectorXd init;
};

struct LossStage {
  std::string label;
  StageKind kind = StageKind::SquaredError;
  /// Output columns for this stage's solution; empty keeps it out of the draws.
  std::vector<std::string> names;
  /// 0 draws from the primary weights, 1 from the secondary ones. Ignored
  /// (always primary) when the loss is linked.
  int weight_stream = 0;
  /// Additive penalty ridge/2 |theta|^2, the prior hook; 0 by default.
  double ridge = 0.0;
  std::function<StageProblem(const StageInput&)> build;
};

struct LossSpec {
  std::vector<LossStage> stages;
  Linkage linkage = Linkage::Linked;
  WeightMode weights = WeightMode::Dirichlet;
  /// Functionals of all stage solutions, evaluated with the primary weights.
  std::vector<std::string> derived_names;
  std::function<Eigen::VectorXd(const StageInput&)> derive;
};

inline constexpr int kMaxResamples = 3;

/// For l = 1..L: draw the weights (primary from rng.split(0).split(l),
/// secondary from rng.split(1).split(l)), solve the stages in order and
/// record the solutions. A draw whose solver fails is redrawn up to three
/// times before the error propagates.
PosteriorDraws bb_minimize(const Dataset& data, const LossSpec& loss, int L, const CounterRng& rng);

/// Where each draw's exposure coefficients come from.
enum class GammaSource {
  /// Weighted fit under the draw's own weights (linked).
  Linked,
  /// Weighted fit under an independent weight draw (per-draw unlinked).
  UnlinkedDraw,
  /// Mean of an independent bootstrap of the exposure model, held fixed.
  UnlinkedMean,
  /// Draw l of the parametric exposure posterior.
  ParametricDraw,
  /// Parametric exposure posterior mean, held fixed.
  ParametricMean,
  /// The scenario's true coefficients.
  True,
};

std::string gamma_source_name(GammaSource source);

struct BBOptions {
  WeightMode weights = WeightMode::Dirichlet;
  /// Exposure posterior size for the parametric sources; defaults to L.
  int exposure_draws = 0;
  /// Fixed exposure coefficients overriding the source (test hook).
  std::optional<Eigen::VectorXd> fixed_gamma;
};

/// Propensity-score regression under the Bayesian bootstrap: exposure stage
/// per `source`, then the weighted least-squares outcome fit on the design
/// with b(x; gamma) plugged in. Columns: [gamma...], outcome coefficients, ate.
PosteriorDraws bb_score_regression(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                   GammaSource source, int L, const CounterRng& rng, const BBOptions& opt = {});

/// Linked or unlinked two-step; unlinked plugs in the mean of an independent
/// bootstrap of the exposure model.
PosteriorDraws bb_two_step(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, bool linked,
                           int L, const CounterRng& rng, const BBOptions& opt = {});

/// Cutting feedback with a bootstrapped outcome: gamma from the parametric
/// posterior or from an unlinked weight draw.
PosteriorDraws bb_cut_feedback(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                               GammaSource source, int L, const CounterRng& rng, const BBOptions& opt = {});

struct CaseWeightRule {
  enum class Kind { None, IPW, ATT, MSM };
  Kind kind = Kind::None;
  /// Upper clamp on the case weights; off when empty.
  std::optional<double> clamp;
};

/// Fitted probabilities below this are rejected unless the rule is clamped.
inline constexpr double kMinPropensity = 1e-6;

/// Case weights from treatments and fitted propensities: 1/f(z|x) for IPW,
/// z + (1 - z) b / (1 - b) for ATT. Throws ExtremePropensity.
Eigen::VectorXd case_weights(const CaseWeightRule& rule, const Eigen::VectorXd& z, const Eigen::VectorXd& b);

/// Inverse probability weighting: per draw, weighted logistic exposure fit,
/// then weighted least squares of y on (1, z). Columns: gamma..., mu0, ate.
PosteriorDraws bb_ipw(const Dataset& data, const TreatmentModel& model, const CaseWeightRule& rule, int L,
                      const CounterRng& rng, WeightMode weights = WeightMode::Dirichlet);

/// Treatment effect on the treated. Columns: gamma..., mu0, att.
PosteriorDraws bb_att(const Dataset& data, const TreatmentModel& model, int L, const CounterRng& rng,
                      std::optional<double> clamp = std::nullopt, WeightMode weights = WeightMode::Dirichlet);

struct PoissonOptions {
  /// false gives the plain Poisson likelihood score without the propensity
  /// residual (the non-robust comparator).
  bool doubly_robust = true;
  WeightMode weights = WeightMode::Dirichlet;
};

/// Weighted doubly robust Poisson estimating equation
///   sum_i w_i (x_i, z_i - b_i) exp(-z_i psi) (y_i - exp(x_i beta + z_i psi)) = 0
/// with x_i = expand_terms(x, outcome_terms). Columns: [gamma...], beta..., psi.
PosteriorDraws bb_dr_poisson(const Dataset& data, const Terms& outcome_terms, const TreatmentModel& model, int L,
                             const CounterRng& rng, const PoissonOptions& opt = {});

/// Sequential-treatment MSM: weighted logistic fits of z1 | x1 and
/// z2 | x1, z1, x2, case weights 1 / (f1 f2), then the four cell means.
/// Columns: g1..., g2..., m00, m10, m01, m11.
PosteriorDraws bb_msm(const Dataset& data, int L, const CounterRng& rng, std::optional<double> clamp = std::nullopt,
                      WeightMode weights = WeightMode::Dirichlet);

struct NaiveMsm {
  /// OLS of y on (1, x1, z1, x2, z2).
  Eigen::VectorXd coef;
  /// Plug-in cell means (00, 10, 01, 11) at the sample covariate means.
  Eigen::Vector4d cells;
};

/// Outcome-regression plug-in comparator for the sequential design.
NaiveMsm naive_msm_plugin(const Dataset& data);

/// Bootstrapped version of the plug-in comparator. Columns: b0, b:x1, b:z1,
/// b:x2, b:z2, m00, m10, m01, m11.
PosteriorDraws bb_naive_msm(const Dataset& data, int L, const CounterRng& rng,
                            WeightMode weights = WeightMode::Dirichlet);

}  // namespace causalbb
