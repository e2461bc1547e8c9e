#pragma once

// Weighted fitting primitives shared by every inference engine: flat-Dirichlet
// weight draws, weighted least squares, weighted logistic regression and a
// Newton root finder for estimating equations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "causalbb/errors.hpp"
#include "causalbb/rng.hpp"

namespace causalbb {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar = double>
struct FitResult {
  Vec<Scalar> coef;
  bool converged = false;
  int iterations = 0;
  Scalar score_norm = 0;
  /// Set when the fit needed the ridge fallback for a near-singular design.
  bool flagged = false;
};

inline constexpr double kConditionLimit = 1e12;

/// Flat Dirichlet draw: normalized standard exponentials.
inline Eigen::VectorXd draw_dirichlet_weights(Eigen::Index n, CounterRng& rng) {
  if (n < 1) throw InvalidArgument("draw_dirichlet_weights: n must be positive");
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.exponential();
  w /= w.sum();
  return w;
}

template <typename Scalar>
Scalar expit(Scalar eta) {
  if (eta >= 0) return Scalar(1) / (Scalar(1) + std::exp(-eta));
  const Scalar e = std::exp(eta);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar log1pexp(Scalar eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

namespace detail {

/// Solves gram * x = rhs, adding the ridge fallback when the estimated
/// condition number exceeds kConditionLimit. Returns false if a ridge was added.
template <typename Scalar>
bool solve_gram(Mat<Scalar>& gram, const Vec<Scalar>& rhs, Vec<Scalar>& out) {
  const auto d = gram.rows();
  Eigen::LDLT<Mat<Scalar>> ldlt(gram);
  auto ill = [&](const Eigen::LDLT<Mat<Scalar>>& f) {
    if (f.info() != Eigen::Success || !f.isPositive()) return true;
    // rcond() treats exact zero pivots as benign, so check the pivots too.
    const auto pivots = f.vectorD().cwiseAbs();
    if (!(pivots.minCoeff() * Scalar(kConditionLimit) > pivots.maxCoeff())) return true;
    const Scalar rc = f.rcond();
    return !(rc > Scalar(0)) || Scalar(1) / rc > Scalar(kConditionLimit);
  };
  if (!ill(ldlt)) {
    out = ldlt.solve(rhs);
    return true;
  }
  const Scalar trace = gram.trace();
  if (!(trace > Scalar(0)) || !std::isfinite(static_cast<double>(trace)))
    throw SingularDesign("weighted design has zero or non-finite trace");
  gram.diagonal().array() += Scalar(1e-8) * trace / Scalar(d);
  ldlt.compute(gram);
  if (ill(ldlt)) throw SingularDesign("weighted design singular after ridge regularization");
  out = ldlt.solve(rhs);
  return false;
}

}  // namespace detail

/// Minimizes sum_i w_i (y_i - design_i . coef)^2.
///
/// The weights need not sum to one (case weights multiply the Dirichlet draw in
/// the weighting engines). A near-singular weighted Gram matrix gets the ridge
/// 1e-8 * trace / d and the result is flagged.
template <typename DerivedX, typename DerivedY, typename DerivedW>
FitResult<typename DerivedX::Scalar> wls_fit(const Eigen::MatrixBase<DerivedX>& design,
                                             const Eigen::MatrixBase<DerivedY>& y,
                                             const Eigen::MatrixBase<DerivedW>& w) {
  using Scalar = typename DerivedX::Scalar;
  const auto n = design.rows();
  const auto d = design.cols();
  if (y.size() != n || w.size() != n) throw InvalidArgument("wls_fit: dimension mismatch");
  if (d == 0) throw InvalidArgument("wls_fit: empty design");

  const Mat<Scalar> wx = design.derived().array().colwise() * w.derived().array();
  Mat<Scalar> gram(d, d);
  gram.noalias() = wx.transpose() * design.derived();
  Vec<Scalar> rhs = wx.transpose() * y.derived();

  FitResult<Scalar> fit;
  Mat<Scalar> work = gram;
  fit.flagged = !detail::solve_gram<Scalar>(work, rhs, fit.coef);
  // One step of iterative refinement on the normal equations.
  Vec<Scalar> resid = y.derived() - design.derived() * fit.coef;
  Vec<Scalar> score = wx.transpose() * resid;
  if (!fit.flagged) {
    Eigen::LDLT<Mat<Scalar>> ldlt(gram);
    fit.coef += ldlt.solve(score);
    resid = y.derived() - design.derived() * fit.coef;
    score = wx.transpose() * resid;
  }
  fit.iterations = 1;
  fit.score_norm = score.norm();
  fit.converged = !fit.flagged;
  return fit;
}

struct LogitOptions {
  double ridge = 0.0;
  double tolerance = 1e-10;
  int max_iterations = 100;
  int max_halvings = 50;
  /// Linear-predictor magnitude beyond which fitted probabilities are
  /// numerically 0 or 1; growth past it without a ridge means separation.
  double separation_eta = 40.0;
};

/// Maximizes sum_i w_i [z_i log b_i + (1 - z_i) log(1 - b_i)] - ridge/2 |coef|^2
/// with b_i = expit(offset_i + design_i . coef), by Newton steps with halving.
template <typename DerivedX, typename DerivedZ, typename DerivedW>
FitResult<typename DerivedX::Scalar> wlogit_fit(
    const Eigen::MatrixBase<DerivedX>& design, const Eigen::MatrixBase<DerivedZ>& z,
    const Eigen::MatrixBase<DerivedW>& w, const LogitOptions& opt = {},
    const std::optional<Vec<typename DerivedX::Scalar>>& init = std::nullopt,
    const std::optional<Vec<typename DerivedX::Scalar>>& offset = std::nullopt) {
  using Scalar = typename DerivedX::Scalar;
  const auto& X = design.derived();
  const auto n = X.rows();
  const auto d = X.cols();
  if (z.size() != n || w.size() != n) throw InvalidArgument("wlogit_fit: dimension mismatch");
  if (offset && offset->size() != n) throw InvalidArgument("wlogit_fit: offset length mismatch");
  const Scalar ridge = Scalar(opt.ridge);

  Vec<Scalar> coef = init ? *init : Vec<Scalar>::Zero(d);
  if (coef.size() != d) throw InvalidArgument("wlogit_fit: init length mismatch");
  if (opt.ridge == 0.0) {
    bool zero = false, one = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(w[i] > 0)) continue;
      (z[i] == Scalar(1) ? one : zero) = true;
    }
    if (!(zero && one)) throw Separation("wlogit_fit: all weighted responses are equal");
  }

  Vec<Scalar> eta(n), prob(n), work(n);
  auto objective = [&](const Vec<Scalar>& c, Vec<Scalar>& eta_out) {
    eta_out.noalias() = X * c;
    if (offset) eta_out += *offset;
    Scalar ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) ll += w[i] * (z[i] * eta_out[i] - log1pexp(eta_out[i]));
    return ll - Scalar(0.5) * ridge * c.squaredNorm();
  };

  Scalar current = objective(coef, eta);
  Vec<Scalar> grad(d), step(d), trial(d), trial_eta(n);
  Mat<Scalar> hess(d, d);
  FitResult<Scalar> fit;
  for (int iter = 0; iter <= opt.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      work[i] = w[i] * (z[i] - prob[i]);
    }
    grad.noalias() = X.transpose() * work;
    grad -= ridge * coef;
    fit.score_norm = grad.norm();
    fit.iterations = iter;
    if (fit.score_norm <= Scalar(opt.tolerance)) {
      fit.coef = coef;
      fit.converged = true;
      return fit;
    }
    if (iter == opt.max_iterations) break;

    for (Eigen::Index i = 0; i < n; ++i) work[i] = std::sqrt(w[i] * prob[i] * (Scalar(1) - prob[i]));
    const Mat<Scalar> sx = X.array().colwise() * work.array();
    hess.noalias() = sx.transpose() * sx;
    hess.diagonal().array() += ridge;
    Mat<Scalar> h = hess;
    detail::solve_gram<Scalar>(h, grad, step);

    // A full step may lose to rounding near the optimum; halved steps must
    // strictly improve so the iteration cannot stall on a null move.
    const Scalar slack = Scalar(8) * std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), std::abs(current));
    Scalar scale = 1;
    bool improved = false;
    for (int k = 0; k <= opt.max_halvings; ++k) {
      trial = coef + scale * step;
      const Scalar value = objective(trial, trial_eta);
      if (std::isfinite(static_cast<double>(value)) && (value > current || (k == 0 && value >= current - slack))) {
        coef = trial;
        eta = trial_eta;
        current = value;
        improved = true;
        break;
      }
      scale /= 2;
    }
    if (!improved && fit.score_norm < Scalar(1e-6)) {
      // Inside the quadratic region the objective change is below rounding.
      coef += step;
      current = objective(coef, eta);
      improved = true;
    }
    const Scalar eta_max = eta.cwiseAbs().maxCoeff();
    if (opt.ridge == 0.0 && eta_max > Scalar(opt.separation_eta))
      throw Separation("wlogit_fit: coefficients diverge (complete or quasi-complete separation)");
    if (!improved) {
      if (opt.ridge == 0.0 && eta_max > Scalar(opt.separation_eta) / 2)
        throw Separation("wlogit_fit: step halving exhausted with diverging coefficients");
      throw MaxIterations("wlogit_fit: step halving exhausted");
    }
  }
  throw MaxIterations("wlogit_fit: no convergence within iteration limit");
}

using ScoreFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFunction = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct RootOptions {
  double relative_tolerance = 1e-10;
  int max_iterations = 100;
  int max_halvings = 40;
  double divergence_norm = 1e8;
};

/// Central-difference Jacobian with step 1e-6 * (1 + |t_j|).
inline Eigen::MatrixXd finite_difference_jacobian(const ScoreFunction& score, const Eigen::VectorXd& t) {
  const auto d = t.size();
  Eigen::MatrixXd jac;
  Eigen::VectorXd probe = t;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(t[j]));
    probe[j] = t[j] + h;
    const Eigen::VectorXd up = score(probe);
    probe[j] = t[j] - h;
    const Eigen::VectorXd down = score(probe);
    probe[j] = t[j];
    if (j == 0) jac.resize(up.size(), d);
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

/// Newton iteration for score(t) = 0 with step halving on |score|.
inline FitResult<double> solve_estimating_equation(const ScoreFunction& score, const JacobianFunction& jacobian,
                                                   const Eigen::VectorXd& init, const RootOptions& opt = {}) {
  Eigen::VectorXd t = init;
  Eigen::VectorXd s = score(t);
  if (!s.allFinite()) throw InvalidArgument("solve_estimating_equation: score not finite at init");
  const double tol = opt.relative_tolerance * std::max(1.0, s.norm());
  double norm = s.norm();

  FitResult<double> fit;
  for (int iter = 0; iter <= opt.max_iterations; ++iter) {
    fit.iterations = iter;
    fit.score_norm = norm;
    if (norm <= tol) {
      fit.coef = t;
      fit.converged = true;
      return fit;
    }
    if (iter == opt.max_iterations) break;
    const Eigen::MatrixXd jac = jacobian ? jacobian(t) : finite_difference_jacobian(score, t);
    const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-s);
    if (!step.allFinite()) throw SingularDesign("solve_estimating_equation: singular Jacobian");

    double scale = 1.0;
    bool improved = false;
    for (int k = 0; k <= opt.max_halvings; ++k) {
      const Eigen::VectorXd trial = t + scale * step;
      const Eigen::VectorXd ts = score(trial);
      const double tn = ts.allFinite() ? ts.norm() : std::numeric_limits<double>::infinity();
      if (tn < norm) {
        t = trial;
        s = ts;
        norm = tn;
        improved = true;
        break;
      }
      scale /= 2;
    }
    if (t.norm() > opt.divergence_norm) throw DivergedStep("solve_estimating_equation: parameter norm diverged");
    if (!improved) {
      // Already at the floating-point floor of the residual.
      if (norm <= 1e3 * tol) {
        fit.coef = t;
        fit.converged = false;
        fit.score_norm = norm;
        fit.iterations = iter;
        return fit;
      }
      throw MaxIterations("solve_estimating_equation: line search stalled");
    }
  }
  throw MaxIterations("solve_estimating_equation: no convergence within iteration limit");
}

inline FitResult<double> solve_estimating_equation(const ScoreFunction& score, const Eigen::VectorXd& init,
                                                   const RootOptions& opt = {}) {
  return solve_estimating_equation(score, JacobianFunction{}, init, opt);
}

}  // namespace causalbb
