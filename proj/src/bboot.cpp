#include "causalbb/bboot.hpp"

#include <chrono>
#include <cmath>

#include "causalbb/errors.hpp"
#include "causalbb/posterior.hpp"

namespace causalbb {

namespace {

using Clock = std::chrono::steady_clock;

Eigen::VectorXd draw_weights(WeightMode mode, Eigen::Index n, CounterRng rng) {
  if (mode == WeightMode::Equal) return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return draw_dirichlet_weights(n, rng);
}

Eigen::VectorXd times(const Eigen::VectorXd& w, const Eigen::VectorXd& case_weights) {
  if (case_weights.size() == 0) return w;
  if (case_weights.size() != w.size()) throw InvalidArgument("case weights have the wrong length");
  return w.cwiseProduct(case_weights);
}

FitResult<double> solve_stage(const LossStage& stage, const StageProblem& problem, const Eigen::VectorXd& w) {
  switch (stage.kind) {
    case StageKind::SquaredError:
    case StageKind::CaseWeightedLeastSquares: {
      if (stage.kind == StageKind::CaseWeightedLeastSquares && problem.case_weights.size() == 0)
        throw InvalidArgument(stage.label + ": case-weighted stage without case weights");
      const Eigen::VectorXd cw = times(w, problem.case_weights);
      if (stage.ridge == 0.0) return wls_fit(problem.design, problem.response, cw);
      // Penalty rows: sqrt(ridge) * I with zero response.
      const auto n = problem.design.rows(), d = problem.design.cols();
      Eigen::MatrixXd x(n + d, d);
      x << problem.design, Eigen::MatrixXd::Identity(d, d);
      Eigen::VectorXd y(n + d), ww(n + d);
      y << problem.response, Eigen::VectorXd::Zero(d);
      ww << cw, Eigen::VectorXd::Constant(d, stage.ridge);
      return wls_fit(x, y, ww);
    }
    case StageKind::Logistic: {
      LogitOptions opt;
      opt.ridge = stage.ridge;
      std::optional<Eigen::VectorXd> init;
      if (problem.init.size() == problem.design.cols()) init = problem.init;
      return wlogit_fit(problem.design, problem.response, times(w, problem.case_weights), opt, init);
    }
    case StageKind::EstimatingEquation: {
      if (!problem.score) throw InvalidArgument(stage.label + ": estimating-equation stage without a score");
      ScoreFunction score = problem.score;
      if (stage.ridge != 0.0) {
        score = [inner = problem.score, r = stage.ridge](const Eigen::VectorXd& t) -> Eigen::VectorXd {
          return inner(t) - r * t;
        };
      }
      return solve_estimating_equation(score, problem.init);
    }
  }
  throw InvalidArgument("unknown stage kind");
}

Eigen::VectorXd weighted_column_means(const Eigen::MatrixXd& m, const Eigen::VectorXd& w) {
  return m.transpose() * w / w.sum();
}

/// Exposure loss stage: weighted logistic likelihood or weighted least squares.
LossStage exposure_stage(const TreatmentModel& model, const Eigen::MatrixXd& f, const Eigen::VectorXd& z,
                         int weight_stream) {
  LossStage s;
  s.label = "exposure";
  s.kind = model.binary() ? StageKind::Logistic : StageKind::SquaredError;
  s.names = model.names();
  s.weight_stream = weight_stream;
  Eigen::VectorXd init;
  if (model.binary()) {
    const auto n = f.rows();
    init = wlogit_fit(f, z, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))).coef;
  }
  s.build = [f, z, init](const StageInput&) {
    StageProblem p;
    p.design = f;
    p.response = z;
    p.init = init;
    return p;
  };
  return s;
}

void check_binary(const Dataset& data, const TreatmentModel& model, const char* who) {
  if (!model.binary()) throw InvalidArgument(std::string(who) + " requires a binary exposure model");
  if (data.z.cols() != 1) throw InvalidArgument(std::string(who) + " requires a single treatment column");
  data.validate(true);
}

}  // namespace

PosteriorDraws bb_minimize(const Dataset& data, const LossSpec& loss, int L, const CounterRng& rng) {
  const auto t0 = Clock::now();
  if (L < 1) throw InvalidArgument("bb_minimize: L must be positive");
  if (loss.stages.empty()) throw InvalidArgument("bb_minimize: empty loss");
  const auto n = data.n();

  PosteriorDraws out;
  out.engine = "bayesian-bootstrap";
  out.dataset_seed = data.seed;
  for (const auto& s : loss.stages) out.names.insert(out.names.end(), s.names.begin(), s.names.end());
  out.names.insert(out.names.end(), loss.derived_names.begin(), loss.derived_names.end());
  out.draws.resize(L, static_cast<Eigen::Index>(out.names.size()));

  const CounterRng primary = rng.split(0), secondary = rng.split(1);
  std::vector<Eigen::VectorXd> solutions;
  for (int l = 0; l < L; ++l) {
    for (int attempt = 0;; ++attempt) {
      const auto stream = static_cast<std::uint64_t>(l);
      CounterRng pr = primary.split(stream), sr = secondary.split(stream);
      if (attempt > 0) {
        pr = pr.split(static_cast<std::uint64_t>(attempt));
        sr = sr.split(static_cast<std::uint64_t>(attempt));
      }
      const Eigen::VectorXd w = draw_weights(loss.weights, n, pr);
      Eigen::VectorXd w2;
      if (loss.linkage == Linkage::Unlinked) w2 = draw_weights(loss.weights, n, sr);
      try {
        solutions.clear();
        long flagged = 0;
        for (const auto& stage : loss.stages) {
          const Eigen::VectorXd& ws = (loss.linkage == Linkage::Unlinked && stage.weight_stream == 1) ? w2 : w;
          const StageProblem problem = stage.build(StageInput{data, ws, solutions, l});
          const FitResult<double> fit = solve_stage(stage, problem, ws);
          flagged += fit.flagged;
          solutions.push_back(fit.coef);
        }
        Eigen::Index c = 0;
        auto row = out.draws.row(l);
        for (std::size_t k = 0; k < loss.stages.size(); ++k) {
          const auto width = static_cast<Eigen::Index>(loss.stages[k].names.size());
          if (width == 0) continue;
          if (solutions[k].size() != width) throw InvalidArgument(loss.stages[k].label + ": names do not match solution");
          row.segment(c, width) = solutions[k].transpose();
          c += width;
        }
        if (!loss.derived_names.empty()) {
          const Eigen::VectorXd extra = loss.derive(StageInput{data, w, solutions, l});
          if (extra.size() != static_cast<Eigen::Index>(loss.derived_names.size()))
            throw InvalidArgument("bb_minimize: derived values do not match their names");
          row.segment(c, extra.size()) = extra.transpose();
        }
        if (!row.allFinite()) throw NumericalError("bb_minimize: non-finite draw");
        out.flagged_draws += flagged;
        break;
      } catch (const NumericalError&) {
        if (attempt >= kMaxResamples) throw;
        ++out.resampled_draws;
      }
    }
  }
  out.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

std::string gamma_source_name(GammaSource source) {
  switch (source) {
    case GammaSource::Linked: return "linked";
    case GammaSource::UnlinkedDraw: return "unlinked-draw";
    case GammaSource::UnlinkedMean: return "unlinked-mean";
    case GammaSource::ParametricDraw: return "parametric-draw";
    case GammaSource::ParametricMean: return "parametric-mean";
    case GammaSource::True: return "true";
  }
  return "?";
}

PosteriorDraws bb_score_regression(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                                   GammaSource source, int L, const CounterRng& rng, const BBOptions& opt) {
  const auto t0 = Clock::now();
  if (data.z.cols() != 1) throw InvalidArgument("bb_score_regression: single treatment column required");
  if (is_joint(design.tag)) throw InvalidArgument("bb_score_regression: joint designs have no bootstrap form");
  const Eigen::MatrixXd x = data.x;
  const Eigen::VectorXd z = data.treatment();
  const Eigen::MatrixXd modifiers = design.modifiers(x);

  LossSpec loss;
  loss.weights = opt.weights;
  const bool scored = design.has_score();
  const Eigen::MatrixXd f = scored ? model.design(x) : Eigen::MatrixXd();

  // Per-draw gamma lives either in an exposure stage or in a table of draws.
  bool gamma_stage = false;
  Eigen::MatrixXd gamma_table;
  if (scored) {
    if (opt.fixed_gamma) {
      gamma_table = opt.fixed_gamma->transpose();
    } else {
      switch (source) {
        case GammaSource::Linked:
        case GammaSource::UnlinkedDraw:
          gamma_stage = true;
          if (source == GammaSource::UnlinkedDraw) loss.linkage = Linkage::Unlinked;
          loss.stages.push_back(exposure_stage(model, f, z, source == GammaSource::UnlinkedDraw ? 1 : 0));
          break;
        case GammaSource::UnlinkedMean: {
          LossSpec exposure;
          exposure.weights = opt.weights;
          exposure.stages.push_back(exposure_stage(model, f, z, 0));
          const PosteriorDraws g = bb_minimize(data, exposure, L, rng.split(2));
          gamma_table = g.mean().transpose();
          break;
        }
        case GammaSource::ParametricDraw: {
          CounterRng er = rng.split(3);
          gamma_table = exposure_posterior(model, f, z, opt.exposure_draws > 0 ? opt.exposure_draws : L, er)
                            .draws.leftCols(f.cols());
          if (gamma_table.rows() < L) throw InvalidArgument("bb_cut_feedback: fewer exposure draws than L");
          break;
        }
        case GammaSource::ParametricMean: {
          CounterRng er = rng.split(3);
          gamma_table = exposure_posterior_mean(model, f, z, opt.exposure_draws > 0 ? opt.exposure_draws : L, er)
                            .transpose();
          break;
        }
        case GammaSource::True:
          gamma_table = model.true_gamma.transpose();
          break;
      }
    }
  }

  LossStage outcome;
  outcome.label = "outcome";
  outcome.kind = StageKind::SquaredError;
  outcome.names = design.names();
  outcome.build = [&, gamma_stage](const StageInput& in) {
    StageProblem p;
    Eigen::VectorXd b;
    if (scored) {
      const Eigen::VectorXd g = gamma_stage ? in.previous.front()
                                            : gamma_table.row(gamma_table.rows() == 1 ? 0 : in.draw).transpose();
      b = model.score(f, g);
    }
    p.design = design.matrix(x, z, b);
    p.response = data.y;
    return p;
  };
  loss.stages.push_back(std::move(outcome));
  loss.derived_names = {"ate"};
  loss.derive = [&](const StageInput& in) {
    return Eigen::VectorXd::Constant(1, design.effect(in.previous.back(), weighted_column_means(modifiers, in.weights)));
  };

  PosteriorDraws out = bb_minimize(data, loss, L, rng);
  out.engine = "bb-" + design_name(design.tag) + "@" + gamma_source_name(source);
  out.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

PosteriorDraws bb_two_step(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model, bool linked,
                           int L, const CounterRng& rng, const BBOptions& opt) {
  return bb_score_regression(data, design, model, linked ? GammaSource::Linked : GammaSource::UnlinkedMean, L, rng,
                             opt);
}

PosteriorDraws bb_cut_feedback(const Dataset& data, const OutcomeDesign& design, const TreatmentModel& model,
                               GammaSource source, int L, const CounterRng& rng, const BBOptions& opt) {
  if (source != GammaSource::ParametricDraw && source != GammaSource::UnlinkedDraw)
    throw InvalidArgument("bb_cut_feedback: gamma source must be a parametric or unlinked draw");
  return bb_score_regression(data, design, model, source, L, rng, opt);
}

Eigen::VectorXd case_weights(const CaseWeightRule& rule, const Eigen::VectorXd& z, const Eigen::VectorXd& b) {
  const auto n = z.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool treated = z[i] == 1.0;
    switch (rule.kind) {
      case CaseWeightRule::Kind::None:
        out[i] = 1.0;
        continue;
      case CaseWeightRule::Kind::IPW:
      case CaseWeightRule::Kind::MSM: {
        const double f = treated ? b[i] : 1.0 - b[i];
        if (f < kMinPropensity && !rule.clamp) throw ExtremePropensity("fitted treatment probability below 1e-6");
        out[i] = 1.0 / f;
        break;
      }
      case CaseWeightRule::Kind::ATT: {
        if (treated) {
          out[i] = 1.0;
          continue;
        }
        if (1.0 - b[i] < kMinPropensity && !rule.clamp) throw ExtremePropensity("fitted control probability below 1e-6");
        out[i] = b[i] / (1.0 - b[i]);
        break;
      }
    }
    if (rule.clamp) out[i] = std::min(out[i], *rule.clamp);
    if (!std::isfinite(out[i]) || !(out[i] > 0)) throw ExtremePropensity("case weight is not positive and finite");
  }
  return out;
}

namespace {

PosteriorDraws weighted_contrast(const Dataset& data, const TreatmentModel& model, const CaseWeightRule& rule, int L,
                                 const CounterRng& rng, WeightMode weights, const char* effect_name) {
  const Eigen::MatrixXd f = model.design(data.x);
  const Eigen::VectorXd z = data.treatment();
  LossSpec loss;
  loss.weights = weights;
  loss.stages.push_back(exposure_stage(model, f, z, 0));
  LossStage outcome;
  outcome.label = "outcome";
  outcome.kind = StageKind::CaseWeightedLeastSquares;
  outcome.names = {"mu0", effect_name};
  Eigen::MatrixXd design(data.n(), 2);
  design.col(0).setOnes();
  design.col(1) = z;
  outcome.build = [&, design](const StageInput& in) {
    StageProblem p;
    p.design = design;
    p.response = data.y;
    p.case_weights = case_weights(rule, z, model.propensity(f, in.previous.front()));
    return p;
  };
  loss.stages.push_back(std::move(outcome));
  return bb_minimize(data, loss, L, rng);
}

}  // namespace

PosteriorDraws bb_ipw(const Dataset& data, const TreatmentModel& model, const CaseWeightRule& rule, int L,
                      const CounterRng& rng, WeightMode weights) {
  check_binary(data, model, "bb_ipw");
  if (rule.kind != CaseWeightRule::Kind::IPW) throw InvalidArgument("bb_ipw: rule must be IPW");
  PosteriorDraws out = weighted_contrast(data, model, rule, L, rng, weights, "ate");
  out.engine = "bb-ipw";
  return out;
}

PosteriorDraws bb_att(const Dataset& data, const TreatmentModel& model, int L, const CounterRng& rng,
                      std::optional<double> clamp, WeightMode weights) {
  check_binary(data, model, "bb_att");
  PosteriorDraws out =
      weighted_contrast(data, model, CaseWeightRule{CaseWeightRule::Kind::ATT, clamp}, L, rng, weights, "att");
  out.engine = "bb-att";
  return out;
}

PosteriorDraws bb_dr_poisson(const Dataset& data, const Terms& outcome_terms, const TreatmentModel& model, int L,
                             const CounterRng& rng, const PoissonOptions& opt) {
  check_binary(data, model, "bb_dr_poisson");
  if ((data.y.array() < 0.0).any()) throw NonPositiveOutcome("bb_dr_poisson: outcome has negative values");
  if (data.y.sum() <= 0.0) throw NonPositiveOutcome("bb_dr_poisson: outcome is identically zero");
  const Eigen::MatrixXd xo = expand_terms(data.x, outcome_terms);
  const Eigen::VectorXd z = data.treatment();
  const Eigen::VectorXd& y = data.y;
  const auto d = xo.cols();
  const Eigen::MatrixXd f = model.design(data.x);

  // Residual column paired with psi: z - b for the robust score, z otherwise.
  auto make_score = [&xo, &z, &y, d, dr = opt.doubly_robust](Eigen::VectorXd w, Eigen::VectorXd zres) -> ScoreFunction {
    return [&xo, &z, &y, d, dr, w = std::move(w), zres = std::move(zres)](const Eigen::VectorXd& t) {
      const double psi = t[d];
      const Eigen::ArrayXd mu = ((xo * t.head(d)).array() + z.array() * psi).exp();
      Eigen::ArrayXd r = w.array() * (y.array() - mu);
      if (dr) r *= (-z.array() * psi).exp();
      Eigen::VectorXd s(d + 1);
      s.head(d) = xo.transpose() * r.matrix();
      s[d] = (zres.array() * r).sum();
      return Eigen::VectorXd(s);
    };
  };

  const auto n = data.n();
  const Eigen::VectorXd equal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::VectorXd gamma0;
  Eigen::VectorXd zres0 = z;
  if (opt.doubly_robust) {
    gamma0 = wlogit_fit(f, z, equal).coef;
    zres0 = z - model.propensity(f, gamma0);
  }
  // Unweighted root as the starting point of every draw.
  Eigen::VectorXd start = Eigen::VectorXd::Zero(d + 1);
  for (Eigen::Index j = 0; j < d; ++j)
    if (outcome_terms[static_cast<std::size_t>(j)].empty()) start[j] = std::log(y.mean());
  start = solve_estimating_equation(make_score(equal, zres0), start).coef;

  LossSpec loss;
  loss.weights = opt.weights;
  if (opt.doubly_robust) {
    LossStage g = exposure_stage(model, f, z, 0);
    loss.stages.push_back(std::move(g));
  }
  LossStage ee;
  ee.label = "estimating-equation";
  ee.kind = StageKind::EstimatingEquation;
  for (const auto& t : outcome_terms) ee.names.push_back("beta:" + term_name(t));
  ee.names.push_back("psi");
  ee.build = [&, dr = opt.doubly_robust](const StageInput& in) {
    StageProblem p;
    const Eigen::VectorXd zres = dr ? Eigen::VectorXd(z - model.propensity(f, in.previous.front())) : z;
    p.score = make_score(in.weights, zres);
    p.init = start;
    return p;
  };
  loss.stages.push_back(std::move(ee));
  PosteriorDraws out = bb_minimize(data, loss, L, rng);
  out.engine = opt.doubly_robust ? "bb-dr-poisson" : "bb-poisson";
  return out;
}

PosteriorDraws bb_msm(const Dataset& data, int L, const CounterRng& rng, std::optional<double> clamp,
                      WeightMode weights) {
  if (data.z.cols() != 2 || data.p() != 2) throw InvalidArgument("bb_msm: requires a two-stage sequential dataset");
  data.validate(true);
  const auto n = data.n();
  const Eigen::VectorXd z1 = data.z.col(0), z2 = data.z.col(1), x1 = data.x.col(0), x2 = data.x.col(1);
  Eigen::MatrixXd f1(n, 2), f2(n, 4);
  f1 << Eigen::VectorXd::Ones(n), x1;
  f2 << Eigen::VectorXd::Ones(n), x1, z1, x2;
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) cells(i, static_cast<Eigen::Index>(z1[i] + 2 * z2[i])) = 1.0;
  const Eigen::VectorXd equal = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Eigen::VectorXd init1 = wlogit_fit(f1, z1, equal).coef, init2 = wlogit_fit(f2, z2, equal).coef;

  auto logistic = [](std::string label, std::vector<std::string> names, Eigen::MatrixXd design, Eigen::VectorXd resp,
                     Eigen::VectorXd init) {
    LossStage s;
    s.label = std::move(label);
    s.kind = StageKind::Logistic;
    s.names = std::move(names);
    s.build = [design = std::move(design), resp = std::move(resp), init = std::move(init)](const StageInput&) {
      StageProblem p;
      p.design = design;
      p.response = resp;
      p.init = init;
      return p;
    };
    return s;
  };
  LossSpec loss;
  loss.weights = weights;
  loss.stages.push_back(logistic("stage1", {"g1:1", "g1:x1"}, f1, z1, init1));
  loss.stages.push_back(logistic("stage2", {"g2:1", "g2:x1", "g2:z1", "g2:x2"}, f2, z2, init2));
  LossStage means;
  means.label = "cell-means";
  means.kind = StageKind::CaseWeightedLeastSquares;
  means.names = {"m00", "m10", "m01", "m11"};
  const CaseWeightRule rule{CaseWeightRule::Kind::MSM, clamp};
  means.build = [&](const StageInput& in) {
    const Eigen::VectorXd b1 = (f1 * in.previous[0]).unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd b2 = (f2 * in.previous[1]).unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd w1 = case_weights(rule, z1, b1), w2 = case_weights(rule, z2, b2);
    StageProblem p;
    p.design = cells;
    p.response = data.y;
    p.case_weights = w1.cwiseProduct(w2);
    if (clamp) p.case_weights = p.case_weights.cwiseMin(*clamp);
    return p;
  };
  loss.stages.push_back(std::move(means));
  PosteriorDraws out = bb_minimize(data, loss, L, rng);
  out.engine = "bb-msm";
  return out;
}

NaiveMsm naive_msm_plugin(const Dataset& data) {
  if (data.z.cols() != 2 || data.p() != 2) throw InvalidArgument("naive_msm_plugin: requires a sequential dataset");
  const auto n = data.n();
  Eigen::MatrixXd x(n, 5);
  x << Eigen::VectorXd::Ones(n), data.x.col(0), data.z.col(0), data.x.col(1), data.z.col(1);
  NaiveMsm out;
  out.coef = wls_fit(x, data.y, Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))).coef;
  const double base = out.coef[0] + out.coef[1] * data.x.col(0).mean() + out.coef[3] * data.x.col(1).mean();
  const int cells[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (int c = 0; c < 4; ++c) out.cells[c] = base + out.coef[2] * cells[c][0] + out.coef[4] * cells[c][1];
  return out;
}

PosteriorDraws bb_naive_msm(const Dataset& data, int L, const CounterRng& rng, WeightMode weights) {
  if (data.z.cols() != 2 || data.p() != 2) throw InvalidArgument("bb_naive_msm: requires a sequential dataset");
  const auto n = data.n();
  Eigen::MatrixXd x(n, 5);
  x << Eigen::VectorXd::Ones(n), data.x.col(0), data.z.col(0), data.x.col(1), data.z.col(1);
  LossSpec loss;
  loss.weights = weights;
  LossStage reg;
  reg.label = "outcome";
  reg.names = {"b0", "b:x1", "b:z1", "b:x2", "b:z2"};
  reg.build = [&](const StageInput&) {
    StageProblem p;
    p.design = x;
    p.response = data.y;
    return p;
  };
  loss.stages.push_back(std::move(reg));
  loss.derived_names = {"m00", "m10", "m01", "m11"};
  loss.derive = [&](const StageInput& in) {
    const Eigen::VectorXd& c = in.previous[0];
    const double base = c[0] + c[1] * in.weights.dot(data.x.col(0)) + c[3] * in.weights.dot(data.x.col(1));
    Eigen::VectorXd m(4);
    m << base, base + c[2], base + c[4], base + c[2] + c[4];
    return m;
  };
  PosteriorDraws out = bb_minimize(data, loss, L, rng);
  out.engine = "bb-naive-msm";
  return out;
}

}  // namespace causalbb
