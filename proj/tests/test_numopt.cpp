#include <doctest.h>

#include <cmath>

#include "causalbb/errors.hpp"
#include "causalbb/numopt.hpp"
#include "oracles.hpp"
#include "solver_suite.hpp"

using namespace causalbb;

TEST_SUITE("numopt") {
  TEST_CASE("dirichlet weights of a single point") {
    CounterRng rng(1);
    const Eigen::VectorXd w = draw_dirichlet_weights(1, rng);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == 1.0);
  }

  TEST_CASE("dirichlet weights stay on the simplex") {
    CounterRng rng(2);
    for (int n : {1, 2, 7, 100, 1000, 10000}) {
      for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd w = draw_dirichlet_weights(n, rng);
        CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
        CHECK(w.minCoeff() >= 0.0);
      }
    }
    CHECK_THROWS_AS(draw_dirichlet_weights(0, rng), InvalidArgument);
  }

  TEST_CASE("dirichlet coordinate means and variances match the closed forms") {
    const auto ten = suite::dirichlet_moments(10, 100000, 3);
    CHECK(ten.max_mean_z < 3.0);
    const auto five = suite::dirichlet_moments(5, 100000, 4);
    CHECK(five.max_var_z < 3.0);
    CHECK(oracle::dirichlet_variance(5) == doctest::Approx(4.0 / 150.0));
  }

  TEST_CASE("dirichlet coordinates are exchangeable") {
    // Permutation check: the spread of coordinate means is what random
    // relabelling of the pooled draws produces.
    CounterRng rng(5);
    const int n = 4, draws = 20000;
    Eigen::MatrixXd w(draws, n);
    for (int l = 0; l < draws; ++l) w.row(l) = draw_dirichlet_weights(n, rng).transpose();
    const auto spread = [&](const Eigen::MatrixXd& m) {
      const Eigen::RowVectorXd means = m.colwise().mean();
      return means.maxCoeff() - means.minCoeff();
    };
    const double observed = spread(w);
    int larger = 0;
    oracle::Gen g(6);
    const int perms = 200;
    for (int k = 0; k < perms; ++k) {
      Eigen::MatrixXd shuffled = w;
      for (int l = 0; l < draws; ++l) {
        for (int j = n - 1; j > 0; --j) std::swap(shuffled(l, j), shuffled(l, g.integer(0, j)));
      }
      if (spread(shuffled) >= observed) ++larger;
    }
    CHECK(larger >= 2);  // p-value above 1%
  }

  TEST_CASE("wls two points determine the line") {
    Eigen::MatrixXd x(2, 2);
    x << 1, 0, 1, 1;
    const auto fit = wls_fit(x, Eigen::Vector2d(1, 3), Eigen::Vector2d(0.5, 0.5));
    CHECK(fit.coef[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.coef[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_FALSE(fit.flagged);
  }

  TEST_CASE("wls intercept-only gives the weighted mean") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
    const auto fit = wls_fit(x, Eigen::Vector3d(0, 1, 2), Eigen::Vector3d(0.5, 0.25, 0.25));
    CHECK(fit.coef[0] == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("wls matches the normal equations on random problems") {
    oracle::Gen g(7);
    const Eigen::MatrixXd x = g.design(20, 3);
    const Eigen::VectorXd y = g.normal_matrix(20, 1).col(0);
    const Eigen::VectorXd w = g.positive_weights(20);
    const auto fit = wls_fit(x, y, w);
    CHECK((fit.coef - oracle::normal_equations(x, y, w)).cwiseAbs().maxCoeff() < 1e-10);
    // Weighted residual orthogonality.
    const Eigen::VectorXd r = y - x * fit.coef;
    CHECK((x.transpose() * w.asDiagonal() * r).norm() <= 1e-8 * y.norm());
    CHECK(suite::wls_vs_normal_equations(100, 8).error < 1e-10);
  }

  TEST_CASE("wls with equal weights is ordinary least squares") {
    oracle::Gen g(9);
    for (int k = 0; k < 20; ++k) {
      const int n = g.integer(6, 40), d = g.integer(1, 4);
      const Eigen::MatrixXd x = g.design(n, d);
      const Eigen::VectorXd y = g.normal_matrix(n, 1).col(0);
      const Eigen::VectorXd ols = x.householderQr().solve(y);
      const auto fit = wls_fit(x, y, Eigen::VectorXd::Constant(n, 1.0 / n));
      CHECK((fit.coef - ols).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("wls regularizes collinear designs and flags them") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 1, 1, 1, 1, 1, 1, 1;
    const auto fit = wls_fit(x, Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d::Constant(0.25));
    CHECK(fit.flagged);
    CHECK_FALSE(fit.converged);
    CHECK(fit.coef.allFinite());
    CHECK_THROWS_AS(wls_fit(Eigen::MatrixXd::Zero(4, 2), Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d::Constant(0.25)),
                    SingularDesign);
  }

  TEST_CASE("wlogit intercept-only matches the weighted mean") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
    const Eigen::Vector2d z(0, 1);
    CHECK(std::abs(wlogit_fit(x, z, Eigen::Vector2d(0.5, 0.5)).coef[0]) < 1e-10);
    CHECK(wlogit_fit(x, z, Eigen::Vector2d(0.25, 0.75)).coef[0] == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  }

  TEST_CASE("wlogit matches a nested grid maximizer") {
    const auto worst = suite::wlogit_vs_grid(10, 10);
    CHECK(worst.instances == 10);
    CHECK(worst.error < 1e-6);
  }

  TEST_CASE("wlogit score vanishes at convergence") {
    oracle::Gen g(11);
    for (int k = 0; k < 20; ++k) {
      const int n = 50;
      const Eigen::MatrixXd x = g.design(n, 3);
      Eigen::VectorXd z(n);
      for (int i = 0; i < n; ++i) z[i] = g.rng.bernoulli(expit(0.5 * x(i, 1))) ? 1 : 0;
      const Eigen::VectorXd w = g.positive_weights(n);
      FitResult<double> fit;
      try {
        fit = wlogit_fit(x, z, w);
      } catch (const Separation&) {
        continue;
      }
      if (!fit.converged) continue;
      Eigen::VectorXd r(n);
      for (int i = 0; i < n; ++i) r[i] = w[i] * (z[i] - expit(x.row(i).dot(fit.coef)));
      CHECK((x.transpose() * r).norm() <= 1e-10);
      CHECK(fit.score_norm <= 1e-10);
    }
  }

  TEST_CASE("wlogit reports separation without a ridge") {
    Eigen::MatrixXd x(4, 2);
    x << 1, -2, 1, -1, 1, 1, 1, 2;
    const Eigen::Vector4d z(0, 0, 1, 1), w = Eigen::Vector4d::Constant(0.25);
    CHECK_THROWS_AS(wlogit_fit(x, z, w), Separation);
    LogitOptions opt;
    opt.ridge = 0.1;
    CHECK(wlogit_fit(x, z, w, opt).converged);
    CHECK_THROWS_AS(wlogit_fit(x.leftCols(1), Eigen::Vector4d::Zero(), w), Separation);
  }

  TEST_CASE("estimating equation roots") {
    const ScoreFunction linear = [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return Eigen::VectorXd::Constant(1, t[0] - 2.0);
    };
    CHECK(std::abs(solve_estimating_equation(linear, Eigen::VectorXd::Zero(1)).coef[0] - 2.0) <= 2e-10);
    const ScoreFunction cubic = [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return Eigen::VectorXd::Constant(1, t[0] * t[0] * t[0] - 8.0);
    };
    const auto fit = solve_estimating_equation(cubic, Eigen::VectorXd::Ones(1));
    CHECK(fit.converged);
    CHECK(fit.coef[0] == doctest::Approx(2.0).epsilon(1e-10));
  }

  TEST_CASE("estimating equation on the weighted Poisson score matches a grid search") {
    const auto worst = suite::estimating_equation_vs_grid(5, 12);
    CHECK(worst.instances == 5);
    CHECK(worst.error < 1e-5);
  }

  TEST_CASE("estimating equation solves random linear scores") {
    CHECK(suite::linear_score_roots(100, 13).error < 1e-9);
  }

  TEST_CASE("estimating equation with an analytic Jacobian") {
    const ScoreFunction s = [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return Eigen::Vector2d(t[0] * t[0] - 4.0, t[0] * t[1] - 6.0);
    };
    const JacobianFunction j = [](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
      Eigen::Matrix2d m;
      m << 2 * t[0], 0, t[1], t[0];
      return m;
    };
    const auto fit = solve_estimating_equation(s, j, Eigen::Vector2d(1, 1));
    CHECK(fit.coef[0] == doctest::Approx(2.0));
    CHECK(fit.coef[1] == doctest::Approx(3.0));
  }

  TEST_CASE("estimating equation failures") {
    const ScoreFunction rootless = [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return Eigen::VectorXd::Constant(1, 1.0 + std::exp(-t[0]));
    };
    CHECK_THROWS_AS(solve_estimating_equation(rootless, Eigen::VectorXd::Zero(1)), NumericalError);
    const ScoreFunction bad = [](const Eigen::VectorXd&) -> Eigen::VectorXd {
      return Eigen::VectorXd::Constant(1, std::nan(""));
    };
    CHECK_THROWS_AS(solve_estimating_equation(bad, Eigen::VectorXd::Zero(1)), InvalidArgument);
  }
}
