#pragma once

// Parametric Bayesian engines: conjugate linear regression, random-walk
// Metropolis for logistic regression, the joint (feedback) sampler, cutting
// feedback and the two-step plug-in.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "causalbb/designs.hpp"
#include "causalbb/draws.hpp"
#include "causalbb/rng.hpp"

namespace causalbb {

/// Flat-prior Normal linear regression: sigma^2 = RSS / chi2_{n-d}, then
/// coef ~ N(OLS, sigma^2 (X'X)^-1). Columns are `names` followed by "sigma".
PosteriorDraws linreg_conjugate_draws(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, int L,
                                      CounterRng& rng, std::vector<std::string> names = {});

struct MhOptions {
  int burn_in = 2000;
  int thin = 5;
  int adapt_every = 100;
  double target_low = 0.2;
  double target_high = 0.4;
};

struct MhDiagnostics {
  double acceptance = 0.0;
  double proposal_scale = 1.0;
};

/// Adaptive random-walk Metropolis for logistic regression with independent
/// N(0, prior_sd^2) priors. Starts at the posterior mode; the proposal
/// covariance is adapted during burn-in only.
PosteriorDraws logistic_mh_draws(const Eigen::MatrixXd& design, const Eigen::VectorXd& z, double prior_sd, int L,
                                 CounterRng& rng, const MhOptions& opt = {}, MhDiagnostics* diag = nullptr,
                                 std::vector<std::string> names = {});

/// Exposure-only posterior pi(gamma | x, z): conjugate for Normal exposure
/// (flat prior, columns gamma..., sigma_z), Metropolis for logistic.
PosteriorDraws exposure_posterior(const TreatmentModel& model, const Eigen::MatrixXd& f, const Eigen::VectorXd& z,
                                  int L, CounterRng& rng);

/// Posterior mean of gamma: the OLS fit for Normal exposure, the Metropolis
/// mean for logistic.
Eigen::VectorXd exposure_posterior_mean(const TreatmentModel& model, const Eigen::MatrixXd& f,
                                        const Eigen::VectorXd& z, int L, CounterRng& rng);

struct GibbsOptions {
  int burn_in = 2000;
  int thin = 5;
  /// Test hook: drop the score column so the outcome factor carries no
  /// information about gamma.
  bool pin_phi_zero = false;
};

/// Joint model: alternates pi(gamma | rest), which sees both likelihood
/// factors, with the conjugate draw of the outcome block given b(x; gamma).
/// Output columns: outcome coefficients, sigma, gamma..., [sigma_z], ate.
PosteriorDraws joint_gibbs(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                           CounterRng& rng, const GibbsOptions& opt = {});

/// Cutting feedback: L draws of gamma from the exposure-only posterior, one
/// conjugate outcome draw for each.
PosteriorDraws cut_feedback_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                  int L, CounterRng& rng);
/// Same, with the gamma draws supplied (one row per outcome draw).
PosteriorDraws cut_feedback_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                  const Eigen::MatrixXd& gamma_draws, CounterRng& rng);

/// Two-step plug-in: gamma-hat is the exposure posterior mean (true gamma for
/// PS designs), then L conjugate outcome draws given b(x; gamma-hat).
PosteriorDraws two_step_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                              CounterRng& rng);
/// Separate exposure and outcome streams; the exposure stage only touches exposure_rng.
PosteriorDraws two_step_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                              CounterRng& exposure_rng, CounterRng& outcome_rng,
                              Eigen::VectorXd* gamma_hat = nullptr);

}  // namespace causalbb
