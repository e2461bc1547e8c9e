#include "causalbb/posterior.hpp"

#include <chrono>
#include <cmath>

#include "causalbb/errors.hpp"
#include "causalbb/numopt.hpp"

namespace causalbb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> default_names(const char* prefix, Eigen::Index d) {
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < d; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

/// Flat-prior conjugate posterior of a Normal linear model, factored once.
class Conjugate {
 public:
  Conjugate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    n_ = x.rows();
    d_ = x.cols();
    if (n_ <= d_) throw InvalidArgument("conjugate regression needs more rows than columns");
    const Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.rcond() > 1.0 / kConditionLimit))
      throw SingularDesign("conjugate regression: design is rank deficient");
    llt_.compute(gram);
    if (llt_.info() != Eigen::Success) throw SingularDesign("conjugate regression: Cholesky failed");
    const Eigen::VectorXd rhs = x.transpose() * y;
    beta_ = llt_.solve(rhs);
    Eigen::VectorXd resid = y - x * beta_;
    beta_ += llt_.solve(x.transpose() * resid);
    rss_ = (y - x * beta_).squaredNorm();
  }

  /// One joint draw (coef, sigma) written into out (length d + 1).
  template <typename Out>
  void draw(CounterRng& rng, Out&& out) {
    const double sigma2 = rss_ / rng.chi_squared(static_cast<double>(n_ - d_));
    const double sigma = std::sqrt(sigma2);
    Eigen::VectorXd e(d_);
    for (Eigen::Index j = 0; j < d_; ++j) e[j] = rng.normal();
    const Eigen::VectorXd dev = llt_.matrixU().solve(e);
    out.head(d_) = (beta_ + sigma * dev).transpose();
    out[d_] = sigma;
  }

  [[nodiscard]] const Eigen::VectorXd& beta() const { return beta_; }
  [[nodiscard]] double rss() const { return rss_; }

 private:
  Eigen::Index n_ = 0, d_ = 0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd beta_;
  double rss_ = 0.0;
};

double logistic_log_posterior(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                              double prior_var) {
  const Eigen::VectorXd eta = x * g;
  double lp = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) lp += z[i] * eta[i] - log1pexp(eta[i]);
  return lp - 0.5 * g.squaredNorm() / prior_var;
}

struct LaplaceFit {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;
};

LaplaceFit logistic_laplace(const Eigen::MatrixXd& x, const Eigen::VectorXd& z, double prior_sd) {
  const auto n = x.rows();
  const double prior_var = prior_sd * prior_sd;
  LogitOptions lo;
  lo.ridge = 1.0 / (static_cast<double>(n) * prior_var);
  lo.tolerance = 1e-12;
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  LaplaceFit out;
  out.mode = wlogit_fit(x, z, w, lo).coef;
  const Eigen::VectorXd eta = x * out.mode;
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = expit(eta[i]);
    s[i] = std::sqrt(p * (1 - p));
  }
  const Eigen::MatrixXd sx = x.array().colwise() * s.array();
  Eigen::MatrixXd h = sx.transpose() * sx;
  h.diagonal().array() += 1.0 / prior_var;
  out.cov = h.inverse();
  return out;
}

/// Random-walk proposal with a Cholesky factor and a tunable scale.
class RandomWalk {
 public:
  RandomWalk(const Eigen::MatrixXd& cov, double base_scale) : base_(base_scale) { set_covariance(cov); }

  bool set_covariance(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return false;
    chol_ = llt.matrixL();
    return true;
  }

  Eigen::VectorXd propose(const Eigen::VectorXd& from, CounterRng& rng) const {
    Eigen::VectorXd e(from.size());
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = rng.normal();
    return from + std::sqrt(base_ * factor_) * (chol_ * e);
  }

  /// Scale update from the acceptance rate of the last window.
  void adapt(double rate, double low, double high) {
    if (rate < low) factor_ *= std::max(0.3, rate / low);
    else if (rate > high) factor_ *= std::min(3.0, rate / high);
  }

  [[nodiscard]] double scale() const { return base_ * factor_; }

 private:
  Eigen::MatrixXd chol_;
  double base_;
  double factor_ = 1.0;
};

Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& xs, std::size_t from) {
  const auto d = xs.front().size();
  const double m = static_cast<double>(xs.size() - from);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t k = from; k < xs.size(); ++k) mean += xs[k];
  mean /= m;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = from; k < xs.size(); ++k) cov += (xs[k] - mean) * (xs[k] - mean).transpose();
  return cov / (m - 1.0);
}

Eigen::VectorXd column_means(const Eigen::MatrixXd& m) { return m.colwise().mean().transpose(); }

void check_single_treatment(const Dataset& data) {
  if (data.z.cols() != 1) throw InvalidArgument("engine requires a single treatment column");
}

std::vector<std::string> with_sigma(std::vector<std::string> names) {
  names.push_back("sigma");
  return names;
}

}  // namespace

PosteriorDraws linreg_conjugate_draws(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, int L,
                                      CounterRng& rng, std::vector<std::string> names) {
  const auto t0 = Clock::now();
  if (L < 1) throw InvalidArgument("linreg_conjugate_draws: L must be positive");
  if (y.size() != design.rows()) throw InvalidArgument("linreg_conjugate_draws: dimension mismatch");
  if (names.empty()) names = default_names("beta", design.cols());
  Conjugate post(design, y);
  PosteriorDraws out;
  out.engine = "conjugate";
  out.names = with_sigma(std::move(names));
  out.draws.resize(L, design.cols() + 1);
  for (int l = 0; l < L; ++l) post.draw(rng, out.draws.row(l));
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws logistic_mh_draws(const Eigen::MatrixXd& design, const Eigen::VectorXd& z, double prior_sd, int L,
                                 CounterRng& rng, const MhOptions& opt, MhDiagnostics* diag,
                                 std::vector<std::string> names) {
  const auto t0 = Clock::now();
  const auto d = design.cols();
  if (L < 1) throw InvalidArgument("logistic_mh_draws: L must be positive");
  if (design.rows() < d) throw InvalidArgument("logistic_mh_draws: fewer rows than parameters");
  if (!(prior_sd > 0)) throw InvalidArgument("logistic_mh_draws: prior sd must be positive");
  if (names.empty()) names = default_names("gamma", d);
  const double prior_var = prior_sd * prior_sd;

  const LaplaceFit laplace = logistic_laplace(design, z, prior_sd);
  RandomWalk walk(laplace.cov, 2.38 * 2.38 / static_cast<double>(d));
  Eigen::VectorXd current = laplace.mode;
  double current_lp = logistic_log_posterior(design, z, current, prior_var);

  PosteriorDraws out;
  out.engine = "logistic-mh";
  out.names = std::move(names);
  out.draws.resize(L, d);
  std::vector<Eigen::VectorXd> history;
  history.reserve(static_cast<std::size_t>(opt.burn_in));
  int window_accepts = 0, kept_accepts = 0;
  const long total = opt.burn_in + static_cast<long>(opt.thin) * L;
  for (long it = 0; it < total; ++it) {
    const Eigen::VectorXd proposal = walk.propose(current, rng);
    const double lp = logistic_log_posterior(design, z, proposal, prior_var);
    const bool accept = std::log(rng.uniform()) < lp - current_lp;
    if (accept) {
      current = proposal;
      current_lp = lp;
    }
    if (it < opt.burn_in) {
      window_accepts += accept;
      history.push_back(current);
      if ((it + 1) % opt.adapt_every == 0) {
        walk.adapt(window_accepts / static_cast<double>(opt.adapt_every), opt.target_low, opt.target_high);
        window_accepts = 0;
        const auto from = history.size() / 2;
        if (history.size() - from > static_cast<std::size_t>(10 * d)) {
          Eigen::MatrixXd cov = sample_covariance(history, from);
          cov.diagonal().array() += 1e-10 * cov.diagonal().mean();
          walk.set_covariance(cov);
        }
      }
      continue;
    }
    kept_accepts += accept;
    const long k = it - opt.burn_in;
    if ((k + 1) % opt.thin == 0) out.draws.row(k / opt.thin) = current.transpose();
  }
  if (diag) {
    diag->acceptance = kept_accepts / static_cast<double>(total - opt.burn_in);
    diag->proposal_scale = walk.scale();
  }
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws exposure_posterior(const TreatmentModel& model, const Eigen::MatrixXd& f, const Eigen::VectorXd& z,
                                  int L, CounterRng& rng) {
  if (model.binary()) return logistic_mh_draws(f, z, model.prior_sd, L, rng, {}, nullptr, model.names());
  PosteriorDraws out = linreg_conjugate_draws(f, z, L, rng, model.names());
  out.names.back() = "sigma_z";
  return out;
}

Eigen::VectorXd exposure_posterior_mean(const TreatmentModel& model, const Eigen::MatrixXd& f,
                                        const Eigen::VectorXd& z, int L, CounterRng& rng) {
  if (!model.binary()) return Conjugate(f, z).beta();
  return column_means(logistic_mh_draws(f, z, model.prior_sd, L, rng).draws);
}

PosteriorDraws joint_gibbs(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                           CounterRng& rng, const GibbsOptions& opt) {
  const auto t0 = Clock::now();
  check_single_treatment(data);
  if (!is_joint(design.tag)) throw InvalidArgument("joint_gibbs: design must be JT or JT-ext");
  if (L < 1) throw InvalidArgument("joint_gibbs: L must be positive");
  const Eigen::MatrixXd f = model.design(data.x);
  const Eigen::VectorXd z = data.treatment();
  const Eigen::VectorXd& y = data.y;
  const auto n = data.n();
  const auto dg = f.cols();

  Eigen::Index phi_col = -1;
  for (Eigen::Index k = 0; k < design.size(); ++k)
    if (design.columns[static_cast<std::size_t>(k)].kind == DesignColumn::Kind::Score) phi_col = k;
  OutcomeDesign fitted = design;
  if (opt.pin_phi_zero) fitted.columns.erase(fitted.columns.begin() + phi_col);
  const Eigen::Index d_out = fitted.size();
  const Eigen::VectorXd modifier_means = column_means(design.modifiers(data.x));

  const double prior_var = model.prior_sd * model.prior_sd;
  Eigen::VectorXd gamma;
  Eigen::LLT<Eigen::MatrixXd> ff_llt;
  Eigen::VectorXd ftz;
  double sigma_z = 0;
  std::optional<RandomWalk> walk;
  if (model.binary()) {
    const LaplaceFit laplace = logistic_laplace(f, z, model.prior_sd);
    gamma = laplace.mode;
    walk.emplace(laplace.cov, 2.38 * 2.38 / static_cast<double>(dg));
  } else {
    Conjugate exposure(f, z);
    gamma = exposure.beta();
    ff_llt.compute(f.transpose() * f);
    ftz = f.transpose() * z;
    sigma_z = std::sqrt(exposure.rss() / static_cast<double>(n));
  }

  PosteriorDraws out;
  out.engine = "joint-gibbs";
  out.dataset_seed = data.seed;
  out.names = with_sigma(design.names());
  for (const auto& name : model.names()) out.names.push_back(name);
  if (!model.binary()) out.names.push_back("sigma_z");
  out.names.push_back("ate");
  out.draws.resize(L, static_cast<Eigen::Index>(out.names.size()));

  Eigen::RowVectorXd theta(d_out + 1);
  Eigen::VectorXd coef(design.size());
  int window_accepts = 0;
  const long total = opt.burn_in + static_cast<long>(opt.thin) * L;
  for (long it = 0; it < total; ++it) {
    // Outcome block given b(x; gamma).
    Eigen::VectorXd b = model.score(f, gamma);
    const Eigen::MatrixXd xo = fitted.matrix(data.x, z, b);
    Conjugate outcome(xo, y);
    outcome.draw(rng, theta);
    const double sigma = theta[d_out];
    if (opt.pin_phi_zero) {
      coef.head(phi_col) = theta.head(phi_col).transpose();
      coef[phi_col] = 0.0;
      coef.tail(design.size() - phi_col - 1) = theta.segment(phi_col, d_out - phi_col).transpose();
    } else {
      coef = theta.head(d_out).transpose();
    }
    const double phi = coef[phi_col];
    // Outcome residual with the score term removed.
    const Eigen::VectorXd partial = y - xo * theta.head(d_out).transpose() + (opt.pin_phi_zero ? 0.0 : phi) * b;

    const long k = it - opt.burn_in;
    const bool keep = k >= 0 && (k + 1) % opt.thin == 0;
    if (keep) {
      auto row = out.draws.row(k / opt.thin);
      row.head(design.size()) = coef.transpose();
      row[design.size()] = sigma;
      row.segment(design.size() + 1, dg) = gamma.transpose();
      if (!model.binary()) row[design.size() + 1 + dg] = sigma_z;
      row[row.size() - 1] = design.effect(coef, modifier_means);
    }

    // Exposure block given the outcome parameters.
    if (!model.binary()) {
      const double rss_z = (z - f * gamma).squaredNorm();
      sigma_z = std::sqrt(rss_z / rng.chi_squared(static_cast<double>(n)));
      const double c1 = 1.0 / (sigma_z * sigma_z);
      const double c2 = phi * phi / (sigma * sigma);
      const Eigen::VectorXd rhs = c1 * ftz + (phi / (sigma * sigma)) * (f.transpose() * partial);
      const Eigen::VectorXd mean = ff_llt.solve(rhs) / (c1 + c2);
      Eigen::VectorXd e(dg);
      for (Eigen::Index j = 0; j < dg; ++j) e[j] = rng.normal();
      gamma = mean + ff_llt.matrixU().solve(e) / std::sqrt(c1 + c2);
    } else {
      auto target = [&](const Eigen::VectorXd& g) {
        const Eigen::VectorXd r = partial - phi * model.score(f, g);
        return logistic_log_posterior(f, z, g, prior_var) - 0.5 * r.squaredNorm() / (sigma * sigma);
      };
      const Eigen::VectorXd proposal = walk->propose(gamma, rng);
      const bool accept = std::log(rng.uniform()) < target(proposal) - target(gamma);
      if (accept) gamma = proposal;
      if (it < opt.burn_in) {
        window_accepts += accept;
        if ((it + 1) % 100 == 0) {
          walk->adapt(window_accepts / 100.0, 0.2, 0.4);
          window_accepts = 0;
        }
      }
    }
  }
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws cut_feedback_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                  const Eigen::MatrixXd& gamma_draws, CounterRng& rng) {
  const auto t0 = Clock::now();
  check_single_treatment(data);
  const Eigen::MatrixXd f = model.design(data.x);
  if (gamma_draws.cols() != f.cols()) throw InvalidArgument("cut_feedback_draws: gamma draws have wrong width");
  const Eigen::VectorXd z = data.treatment();
  const Eigen::VectorXd modifier_means = column_means(design.modifiers(data.x));
  const auto d = design.size();

  PosteriorDraws out;
  out.engine = "cut-feedback";
  out.dataset_seed = data.seed;
  out.names = with_sigma(design.names());
  out.names.push_back("ate");
  out.draws.resize(gamma_draws.rows(), d + 2);
  for (Eigen::Index l = 0; l < gamma_draws.rows(); ++l) {
    const Eigen::VectorXd b = model.score(f, gamma_draws.row(l).transpose());
    Conjugate outcome(design.matrix(data.x, z, b), data.y);
    auto row = out.draws.row(l);
    outcome.draw(rng, row.head(d + 1));
    row[d + 1] = design.effect(row.head(d).transpose(), modifier_means);
  }
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws cut_feedback_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                  int L, CounterRng& rng) {
  const auto t0 = Clock::now();
  if (!is_cut(design.tag)) throw InvalidArgument("cut_feedback_draws: design must be CF or CF-ext");
  if (L < 1) throw InvalidArgument("cut_feedback_draws: L must be positive");
  check_single_treatment(data);
  CounterRng exposure_rng = rng.split(1);
  CounterRng outcome_rng = rng.split(2);
  const Eigen::MatrixXd f = model.design(data.x);
  const PosteriorDraws gamma = exposure_posterior(model, f, data.treatment(), L, exposure_rng);
  PosteriorDraws out = cut_feedback_draws(data, design, model, gamma.draws.leftCols(f.cols()), outcome_rng);
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws two_step_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                              CounterRng& exposure_rng, CounterRng& outcome_rng, Eigen::VectorXd* gamma_hat) {
  const auto t0 = Clock::now();
  check_single_treatment(data);
  if (is_joint(design.tag) || is_cut(design.tag))
    throw InvalidArgument("two_step_draws: JT and CF designs have their own engines");
  if (L < 1) throw InvalidArgument("two_step_draws: L must be positive");
  const Eigen::VectorXd z = data.treatment();
  Eigen::VectorXd b;
  if (design.has_score()) {
    const Eigen::MatrixXd f = model.design(data.x);
    const Eigen::VectorXd g = uses_true_score(design.tag) ? model.true_gamma
                                                          : exposure_posterior_mean(model, f, z, L, exposure_rng);
    if (gamma_hat) *gamma_hat = g;
    b = model.score(f, g);
  }
  const Eigen::VectorXd modifier_means = column_means(design.modifiers(data.x));
  PosteriorDraws out = linreg_conjugate_draws(design.matrix(data.x, z, b), data.y, L, outcome_rng, design.names());
  const auto d = design.size();
  out.names.push_back("ate");
  out.draws.conservativeResize(Eigen::NoChange, d + 2);
  for (Eigen::Index l = 0; l < out.draws.rows(); ++l)
    out.draws(l, d + 1) = design.effect(out.draws.row(l).head(d).transpose(), modifier_means);
  out.engine = "two-step";
  out.dataset_seed = data.seed;
  out.wall_time = seconds_since(t0);
  return out;
}

PosteriorDraws two_step_draws(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, int L,
                              CounterRng& rng) {
  CounterRng exposure_rng = rng.split(1);
  CounterRng outcome_rng = rng.split(2);
  return two_step_draws(data, design, model, L, exposure_rng, outcome_rng);
}

}  // namespace causalbb
