#include <doctest.h>

#include <cmath>

#include "causalbb/bboot.hpp"
#include "causalbb/errors.hpp"
#include "causalbb/numopt.hpp"
#include "oracles.hpp"

using namespace causalbb;

namespace {

/// Primary weights of draw l, rebuilt from the documented stream layout.
Eigen::VectorXd primary_weights(const CounterRng& rng, Eigen::Index n, int l) {
  CounterRng r = rng.split(0).split(static_cast<std::uint64_t>(l));
  return draw_dirichlet_weights(n, r);
}

Eigen::VectorXd secondary_weights(const CounterRng& rng, Eigen::Index n, int l) {
  CounterRng r = rng.split(1).split(static_cast<std::uint64_t>(l));
  return draw_dirichlet_weights(n, r);
}

Dataset regression_data(std::uint64_t seed, Eigen::Index n) {
  oracle::Gen g(seed);
  Dataset d;
  d.x = g.normal_matrix(n, 2);
  d.z = Eigen::MatrixXd::Zero(n, 1);
  d.y = 1.0 + 2.0 * d.x.col(0).array() - d.x.col(1).array();
  for (Eigen::Index i = 0; i < n; ++i) d.y[i] += g.rng.normal();
  return d;
}

LossSpec linear_loss(const Dataset& d, Eigen::MatrixXd design) {
  LossSpec loss;
  LossStage s;
  s.label = "ols";
  for (Eigen::Index j = 0; j < design.cols(); ++j) s.names.push_back("b" + std::to_string(j));
  s.build = [&d, design](const StageInput&) {
    StageProblem p;
    p.design = design;
    p.response = d.y;
    return p;
  };
  loss.stages.push_back(std::move(s));
  return loss;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out << Eigen::VectorXd::Ones(x.rows()), x;
  return out;
}

/// Hajek contrast sum(w y | z=1) / sum(w | z=1) - same for z=0.
double hajek(const Eigen::VectorXd& w, const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
  double s1 = 0, n1 = 0, s0 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == 1.0) {
      s1 += w[i] * y[i];
      n1 += w[i];
    } else {
      s0 += w[i] * y[i];
      n0 += w[i];
    }
  }
  return s1 / n1 - s0 / n0;
}

}  // namespace

TEST_SUITE("bboot") {
  TEST_CASE("equal weights reproduce ordinary least squares on every draw") {
    const Dataset d = regression_data(1, 60);
    const Eigen::MatrixXd x = with_intercept(d.x);
    LossSpec loss = linear_loss(d, x);
    loss.weights = WeightMode::Equal;
    const auto draws = bb_minimize(d, loss, 5, CounterRng(2));
    const Eigen::VectorXd ols = oracle::normal_equations(x, d.y, Eigen::VectorXd::Ones(60));
    for (Eigen::Index l = 0; l < 5; ++l) CHECK((draws.draws.row(l).transpose() - ols).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("each draw is the weighted fit under its own Dirichlet weights") {
    const Dataset d = regression_data(3, 40);
    const Eigen::MatrixXd x = with_intercept(d.x);
    const CounterRng rng(4);
    const auto draws = bb_minimize(d, linear_loss(d, x), 20, rng);
    for (int l = 0; l < 20; ++l) {
      const Eigen::VectorXd ref = oracle::normal_equations(x, d.y, primary_weights(rng, 40, l));
      CHECK((draws.draws.row(l).transpose() - ref).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("intercept-only draws are weighted means") {
    const Dataset d = regression_data(5, 25);
    const CounterRng rng(6);
    const auto draws = bb_minimize(d, linear_loss(d, Eigen::MatrixXd::Ones(25, 1)), 50, rng);
    for (int l = 0; l < 50; ++l) CHECK(std::abs(draws.draws(l, 0) - primary_weights(rng, 25, l).dot(d.y)) < 1e-12);
  }

  TEST_CASE("bootstrap draws replay bit for bit") {
    const Dataset d = regression_data(7, 30);
    const LossSpec loss = linear_loss(d, with_intercept(d.x));
    const auto a = bb_minimize(d, loss, 30, CounterRng(8));
    const auto b = bb_minimize(d, loss, 30, CounterRng(8));
    const auto c = bb_minimize(d, loss, 30, CounterRng(9));
    CHECK(a.draws == b.draws);
    CHECK_FALSE(a.draws == c.draws);
    // A longer run extends a shorter one.
    const auto longer = bb_minimize(d, loss, 40, CounterRng(8));
    CHECK(longer.draws.topRows(30) == a.draws);
  }

  TEST_CASE("bootstrap draws have the weighted-mean spread") {
    // Var(sum w y) = sum (y - ybar)^2 / (n (n + 1)) for flat Dirichlet weights.
    const Dataset d = regression_data(10, 20);
    const auto draws = bb_minimize(d, linear_loss(d, Eigen::MatrixXd::Ones(20, 1)), 40000, CounterRng(11));
    const Eigen::VectorXd c = draws.draws.col(0);
    const double v = (c.array() - c.mean()).square().mean();
    const double expected = (d.y.array() - d.y.mean()).square().sum() / (20.0 * 21.0);
    CHECK(std::abs(c.mean() - d.y.mean()) < 4 * std::sqrt(expected / 40000));
    CHECK(std::abs(v / expected - 1.0) < 0.03);
  }

  TEST_CASE("argument errors") {
    const Dataset d = regression_data(12, 10);
    CHECK_THROWS_AS(bb_minimize(d, linear_loss(d, Eigen::MatrixXd::Ones(10, 1)), 0, CounterRng(1)), InvalidArgument);
    CHECK_THROWS_AS(bb_minimize(d, LossSpec{}, 5, CounterRng(1)), InvalidArgument);
  }

  TEST_CASE("linked and unlinked exposure stages use their own weight streams") {
    const auto& spec = find_scenario("ex2-s1");
    const Dataset d = generate_dataset(spec, 300, 13);
    const TreatmentModel model = make_treatment_model(spec);
    const auto design = make_outcome_design(DesignTag::TwoStep, spec);
    const Eigen::MatrixXd f = model.design(d.x);
    const CounterRng rng(14);
    const auto linked = bb_score_regression(d, design, model, GammaSource::Linked, 8, rng);
    const auto unlinked = bb_score_regression(d, design, model, GammaSource::UnlinkedDraw, 8, rng);
    const auto k = f.cols();
    for (int l = 0; l < 8; ++l) {
      const Eigen::VectorXd g1 = wlogit_fit(f, d.treatment(), primary_weights(rng, 300, l)).coef;
      const Eigen::VectorXd g2 = wlogit_fit(f, d.treatment(), secondary_weights(rng, 300, l)).coef;
      CHECK((linked.draws.row(l).head(k).transpose() - g1).cwiseAbs().maxCoeff() < 1e-7);
      CHECK((unlinked.draws.row(l).head(k).transpose() - g2).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("with the exposure coefficients pinned every source agrees") {
    const auto& spec = find_scenario("ex2-s2");
    const Dataset d = generate_dataset(spec, 200, 15);
    const TreatmentModel model = make_treatment_model(spec);
    const auto design = make_outcome_design(DesignTag::TwoStep, spec);
    BBOptions opt;
    opt.fixed_gamma = model.true_gamma;
    const CounterRng rng(16);
    const auto a = bb_two_step(d, design, model, true, 40, rng, opt);
    const auto b = bb_two_step(d, design, model, false, 40, rng, opt);
    const auto c = bb_score_regression(d, make_outcome_design(DesignTag::TwoStep, spec), model, GammaSource::True, 40, rng);
    CHECK(a.draws == b.draws);
    CHECK((a.column("ate") - c.column("ate")).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("parametric exposure draws must cover L") {
    const auto& spec = find_scenario("ex2-s1");
    const Dataset d = generate_dataset(spec, 200, 17);
    BBOptions opt;
    opt.exposure_draws = 5;
    CHECK_THROWS_AS(bb_cut_feedback(d, make_outcome_design(DesignTag::CF, spec), make_treatment_model(spec),
                                    GammaSource::ParametricDraw, 10, CounterRng(1), opt),
                    InvalidArgument);
    CHECK_THROWS_AS(bb_cut_feedback(d, make_outcome_design(DesignTag::CF, spec), make_treatment_model(spec),
                                    GammaSource::Linked, 10, CounterRng(1)),
                    InvalidArgument);
  }

  TEST_CASE("case weights at a constant one-half propensity") {
    const Eigen::VectorXd z = (Eigen::VectorXd(6) << 0, 1, 1, 0, 1, 0).finished();
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(6, 0.5);
    const Eigen::VectorXd ipw = case_weights({CaseWeightRule::Kind::IPW, std::nullopt}, z, b);
    const Eigen::VectorXd att = case_weights({CaseWeightRule::Kind::ATT, std::nullopt}, z, b);
    CHECK((ipw.array() == 2.0).all());
    CHECK((att.array() == 1.0).all());
    const Eigen::VectorXd b2 = (Eigen::VectorXd(6) << 0.2, 0.8, 0.5, 0.75, 0.25, 0.5).finished();
    const Eigen::VectorXd w = case_weights({CaseWeightRule::Kind::IPW, std::nullopt}, z, b2);
    CHECK(w[0] == doctest::Approx(1.25));
    CHECK(w[1] == doctest::Approx(1.25));
    CHECK(w[3] == doctest::Approx(4.0));
    const Eigen::VectorXd a = case_weights({CaseWeightRule::Kind::ATT, std::nullopt}, z, b2);
    CHECK(a[3] == doctest::Approx(3.0));
    CHECK(a[4] == 1.0);
  }

  TEST_CASE("extreme propensities raise unless clamped") {
    const Eigen::Vector2d z(1, 0);
    const Eigen::Vector2d b(1e-8, 0.5);
    CHECK_THROWS_AS(case_weights({CaseWeightRule::Kind::IPW, std::nullopt}, z, b), ExtremePropensity);
    const Eigen::VectorXd w = case_weights({CaseWeightRule::Kind::IPW, 50.0}, z, b);
    CHECK(w[0] == 50.0);
    CHECK(w[1] == 2.0);
    CHECK_THROWS_AS(case_weights({CaseWeightRule::Kind::ATT, std::nullopt}, Eigen::Vector2d(0, 0), Eigen::Vector2d(1.0, 0.1)),
                    ExtremePropensity);
  }

  TEST_CASE("inverse probability draws are Hajek contrasts under the draw's weights") {
    const auto& spec = find_scenario("ex2-s2");
    const Dataset d = generate_dataset(spec, 400, 18);
    const TreatmentModel model = make_treatment_model(spec);
    const Eigen::MatrixXd f = model.design(d.x);
    const Eigen::VectorXd z = d.treatment();
    const CounterRng rng(19);
    const auto ipw = bb_ipw(d, model, {CaseWeightRule::Kind::IPW, std::nullopt}, 10, rng);
    const auto att = bb_att(d, model, 10, rng);
    const auto k = f.cols();
    for (int l = 0; l < 10; ++l) {
      const Eigen::VectorXd w = primary_weights(rng, 400, l);
      const Eigen::VectorXd b = model.propensity(f, ipw.draws.row(l).head(k).transpose());
      Eigen::VectorXd wi(400), wa(400);
      for (int i = 0; i < 400; ++i) {
        wi[i] = w[i] / (z[i] == 1.0 ? b[i] : 1.0 - b[i]);
        wa[i] = w[i] * (z[i] == 1.0 ? 1.0 : b[i] / (1.0 - b[i]));
      }
      CHECK(std::abs(ipw.column("ate")[l] - hajek(wi, z, d.y)) < 1e-9);
      CHECK(std::abs(att.column("att")[l] - hajek(wa, z, d.y)) < 1e-9);
    }
  }

  TEST_CASE("inverse probability weighting recovers the effect under randomization") {
    const ScenarioSpec spec = find_scenario("ex2-s1").with_effect(1.5).randomized();
    const Dataset d = generate_dataset(spec, 4000, 20);
    const auto draws = bb_ipw(d, make_treatment_model(spec), {CaseWeightRule::Kind::IPW, std::nullopt}, 200, CounterRng(21));
    const Eigen::VectorXd ate = draws.column("ate");
    const double sd = std::sqrt((ate.array() - ate.mean()).square().mean());
    CHECK(std::abs(ate.mean() - 1.5) < 4 * sd);
    CHECK(sd < 0.2);
  }

  TEST_CASE("treatment-column errors") {
    const auto& spec = find_scenario("ex1-normal");
    const Dataset d = generate_dataset(spec, 100, 22);
    CHECK_THROWS_AS(bb_ipw(d, make_treatment_model(spec), {CaseWeightRule::Kind::IPW, std::nullopt}, 5, CounterRng(1)),
                    InvalidArgument);
    const auto& bin = find_scenario("ex2-s1");
    const Dataset db = generate_dataset(bin, 100, 23);
    CHECK_THROWS_AS(bb_ipw(db, make_treatment_model(bin), {CaseWeightRule::Kind::ATT, std::nullopt}, 5, CounterRng(1)),
                    InvalidArgument);
    CHECK_THROWS_AS(bb_msm(db, 5, CounterRng(1)), InvalidArgument);
    CHECK_THROWS_AS(naive_msm_plugin(db), InvalidArgument);
  }

  TEST_CASE("sequential cell means are inverse-weighted cell averages") {
    const Dataset d = generate_dataset("msm-2stage", 500, 24);
    const CounterRng rng(25);
    const auto draws = bb_msm(d, 6, rng);
    const Eigen::VectorXd z1 = d.z.col(0), z2 = d.z.col(1);
    for (int l = 0; l < 6; ++l) {
      const Eigen::VectorXd w = primary_weights(rng, 500, l);
      const Eigen::RowVectorXd row = draws.draws.row(l);
      double num[4] = {}, den[4] = {};
      for (int i = 0; i < 500; ++i) {
        const double b1 = expit(row[0] + row[1] * d.x(i, 0));
        const double b2 = expit(row[2] + row[3] * d.x(i, 0) + row[4] * z1[i] + row[5] * d.x(i, 1));
        const double f = (z1[i] == 1 ? b1 : 1 - b1) * (z2[i] == 1 ? b2 : 1 - b2);
        const int c = static_cast<int>(z1[i] + 2 * z2[i]);
        num[c] += w[i] / f * d.y[i];
        den[c] += w[i] / f;
      }
      const char* names[4] = {"m00", "m10", "m01", "m11"};
      for (int c = 0; c < 4; ++c) CHECK(std::abs(draws.column(names[c])[l] - num[c] / den[c]) < 1e-9);
    }
  }

  TEST_CASE("clamped sequential weights cap the product weight") {
    const Dataset d = generate_dataset("msm-2stage", 300, 26);
    const auto a = bb_msm(d, 20, CounterRng(27));
    const auto b = bb_msm(d, 20, CounterRng(27), 1e12);
    CHECK((a.draws - b.draws).cwiseAbs().maxCoeff() < 1e-12);
    const auto c = bb_msm(d, 20, CounterRng(27), 1.5);
    CHECK_FALSE((a.draws - c.draws).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("bootstrapped plug-in comparator reduces to the plug-in under equal weights") {
    const Dataset d = generate_dataset("msm-2stage", 300, 28);
    const NaiveMsm plug = naive_msm_plugin(d);
    const auto draws = bb_naive_msm(d, 3, CounterRng(29), WeightMode::Equal);
    for (int l = 0; l < 3; ++l) {
      CHECK((draws.draws.row(l).head(5).transpose() - plug.coef).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((draws.draws.row(l).tail(4).transpose() - plug.cells).cwiseAbs().maxCoeff() < 1e-10);
    }
    Eigen::MatrixXd x(300, 5);
    x << Eigen::VectorXd::Ones(300), d.x.col(0), d.z.col(0), d.x.col(1), d.z.col(1);
    CHECK((plug.coef - oracle::normal_equations(x, d.y, Eigen::VectorXd::Ones(300))).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(plug.cells[3] - plug.cells[0] == doctest::Approx(plug.coef[2] + plug.coef[4]));
  }

  TEST_CASE("Poisson outcome checks") {
    const auto& spec = find_scenario("dr-poisson");
    Dataset d = generate_dataset(spec, 200, 30);
    const TreatmentModel model = make_treatment_model(spec);
    Dataset neg = d;
    neg.y[0] = -1;
    CHECK_THROWS_AS(bb_dr_poisson(neg, spec.outcome_terms, model, 5, CounterRng(1)), NonPositiveOutcome);
    Dataset zero = d;
    zero.y.setZero();
    CHECK_THROWS_AS(bb_dr_poisson(zero, spec.outcome_terms, model, 5, CounterRng(1)), NonPositiveOutcome);
  }

  TEST_CASE("doubly robust Poisson draws solve the weighted score") {
    const auto& spec = find_scenario("dr-poisson");
    const Dataset d = generate_dataset(spec, 400, 31);
    const TreatmentModel model = make_treatment_model(spec);
    const CounterRng rng(32);
    const auto draws = bb_dr_poisson(d, spec.outcome_terms, model, 5, rng);
    const Eigen::MatrixXd xo = expand_terms(d.x, spec.outcome_terms);
    const Eigen::MatrixXd f = model.design(d.x);
    const Eigen::VectorXd z = d.treatment();
    const auto k = f.cols(), q = xo.cols();
    for (int l = 0; l < 5; ++l) {
      const Eigen::VectorXd w = primary_weights(rng, 400, l);
      const Eigen::RowVectorXd row = draws.draws.row(l);
      const Eigen::VectorXd b = model.propensity(f, row.head(k).transpose());
      const Eigen::VectorXd beta = row.segment(k, q).transpose();
      const double psi = row[k + q];
      Eigen::VectorXd s = Eigen::VectorXd::Zero(q + 1);
      for (int i = 0; i < 400; ++i) {
        const double r = w[i] * std::exp(-z[i] * psi) * (d.y[i] - std::exp(xo.row(i).dot(beta) + z[i] * psi));
        s.head(q) += r * xo.row(i).transpose();
        s[q] += r * (z[i] - b[i]);
      }
      CHECK(s.cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(draws.names.back() == "psi");
  }

  TEST_CASE("doubly robust Poisson is near the truth in a large sample") {
    const auto& spec = find_scenario("dr-poisson");
    const Dataset d = generate_dataset(spec, 5000, 33);
    const TreatmentModel model = make_treatment_model(spec);
    const auto good = bb_dr_poisson(d, spec.outcome_terms, model, 40, CounterRng(34));
    const auto mis = bb_dr_poisson(d, raw_confounders(static_cast<int>(d.p()), true), model, 40, CounterRng(35));
    CHECK(std::abs(good.column("psi").mean() - 0.3) < 0.1);
    CHECK(std::abs(mis.column("psi").mean() - 0.3) < 0.1);
  }
}
