#include "causalbb/dgp.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>

#include "causalbb/errors.hpp"
#include "causalbb/numopt.hpp"

namespace causalbb {

namespace {

Eigen::MatrixXd ar1_covariance(int p, double rho) {
  Eigen::MatrixXd s(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) s(i, j) = std::pow(rho, std::abs(i - j));
  return s;
}

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

Terms linear_terms(int p) { return raw_confounders(p, true); }

std::vector<ScenarioSpec> build_registry() {
  std::vector<ScenarioSpec> out;

  {
    ScenarioSpec s;
    s.name = "ex1-normal";
    s.description = "Normal exposure with nonlinear exposure and outcome means, constant effect 5";
    s.p = 3;
    s.x_mean = vec({-1.0, 2.0, 0.5});
    s.x_cov = ar1_covariance(3, 0.8);
    s.treatment_family = TreatmentFamily::LinearNormal;
    s.treatment_terms = {{}, {0}, {1}, {2}, {0, 1}, {1, 2}};
    s.gamma = vec({1.0, -1.0, 1.0, 2.0, -1.0, 2.0});
    s.treatment_sd = 1.0;
    s.outcome_terms = {{}, {0}, {1}, {2}, {1, 2}};
    s.xi = vec({1.0, 1.0, 1.0, 1.0, 5.0});
    s.effect_terms = {{}};
    s.psi = vec({5.0});
    s.outcome_sd = 1.0;
    s.analysis_treatment_terms = {{}, {0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
    s.score_scale = ScoreScale::Mean;
    out.push_back(s);
  }

  const std::pair<const char*, Eigen::VectorXd> ex2[] = {
      {"ex2-s1", vec({0.0, 0.3, 0.8, 0.3, 0.8})},
      {"ex2-s2", vec({0.5, 0.5, 0.75, 1.0, 1.0})},
      {"ex2-s3", vec({0.0, 0.45, 0.90, 1.35, 1.8})},
  };
  for (const auto& [name, gamma] : ex2) {
    ScenarioSpec s;
    s.name = name;
    s.description = "binary exposure, four independent confounders, no treatment effect";
    s.p = 4;
    s.x_mean = vec({1.0, 1.0, -1.0, -1.0});
    s.x_cov = Eigen::MatrixXd::Identity(4, 4);
    s.treatment_family = TreatmentFamily::LogisticBernoulli;
    s.treatment_terms = linear_terms(4);
    s.gamma = gamma;
    s.outcome_terms = {{0}, {1}, {2}, {3}, {2, 3}};
    s.xi = vec({0.25, 0.25, 0.25, 0.25, 1.5});
    s.effect_terms = {{}};
    s.psi = vec({0.0});
    s.analysis_treatment_terms = linear_terms(4);
    s.score_scale = ScoreScale::Probability;
    out.push_back(s);
  }

  {
    ScenarioSpec s;
    s.name = "ex3-hetero";
    s.description = "binary exposure with effect 1 + 2 x1 modified by x1";
    s.p = 4;
    s.x_mean = vec({1.0, 1.0, -1.0, -1.0});
    s.x_cov = Eigen::MatrixXd::Identity(4, 4);
    s.treatment_family = TreatmentFamily::LogisticBernoulli;
    s.treatment_terms = {{0}, {1}, {2}, {3}};
    s.gamma = vec({0.45, 0.9, 1.35, 1.8});
    s.outcome_terms = {{0}, {1}, {2}, {3}, {0, 2}, {1, 3}, {0, 3}, {2, 3}};
    s.xi = vec({1.0, 1.0, 1.0, 1.0, 0.75, 0.75, 0.75, 0.75});
    s.effect_terms = {{}, {0}};
    s.psi = vec({1.0, 2.0});
    s.analysis_treatment_terms = linear_terms(4);
    s.score_scale = ScoreScale::Probability;
    out.push_back(s);
  }

  {
    ScenarioSpec s;
    s.name = "msm-2stage";
    s.description = "two sequential binary treatments with a mediating confounder";
    s.p = 2;
    s.treatment_family = TreatmentFamily::TwoStageSequential;
    s.estimand = EstimandKind::CounterfactualMeans;
    s.score_scale = ScoreScale::Probability;
    out.push_back(s);
  }

  for (bool binary : {false, true}) {
    ScenarioSpec s;
    s.name = binary ? "appB-binary-z" : "appB-normal-z";
    s.description = binary ? "binary exposure, linear outcome; plug-in coverage study"
                           : "Normal exposure (sd 5), linear outcome; plug-in bias study";
    s.p = 3;
    s.x_mean = vec({2.0, -1.0, 0.5});
    s.x_cov = ar1_covariance(3, 0.8);
    s.treatment_family = binary ? TreatmentFamily::LogisticBernoulli : TreatmentFamily::LinearNormal;
    s.treatment_terms = linear_terms(3);
    s.gamma = binary ? vec({2.0, -2.0, -2.0, 1.0}) : vec({5.0, 5.0, -3.0, 2.0});
    s.treatment_sd = 5.0;
    s.outcome_terms = linear_terms(3);
    s.xi = vec({3.0, -2.0, 10.0, 6.0});
    s.effect_terms = {{}};
    s.psi = vec({5.0});
    s.outcome_sd = 1.0;
    s.analysis_treatment_terms = linear_terms(3);
    s.score_scale = binary ? ScoreScale::LinearPredictor : ScoreScale::Mean;
    out.push_back(s);
  }

  {
    ScenarioSpec s;
    s.name = "dr-poisson";
    s.description = "Poisson outcome with interaction confounding; log rate ratio 0.3";
    s.p = 2;
    s.x_mean = Eigen::VectorXd::Zero(2);
    s.x_cov = Eigen::MatrixXd::Identity(2, 2);
    s.treatment_family = TreatmentFamily::LogisticBernoulli;
    s.treatment_terms = {{}, {0}, {1}, {0, 1}};
    s.gamma = vec({0.0, 0.5, -0.5, 0.8});
    s.outcome_family = OutcomeFamily::Poisson;
    s.outcome_terms = {{}, {0}, {1}, {0, 1}};
    s.xi = vec({0.5, 0.3, 0.3, 0.35});
    s.effect_terms = {{}};
    s.psi = vec({0.3});
    s.analysis_treatment_terms = {{}, {0}, {1}, {0, 1}};
    s.score_scale = ScoreScale::Probability;
    s.estimand = EstimandKind::LogRateRatio;
    out.push_back(s);
  }

  for (bool hetero : {false, true}) {
    ScenarioSpec s;
    s.name = hetero ? "att-hetero" : "att-const";
    s.description = hetero ? "confounded binary exposure, effect x1; target ATT"
                           : "confounded binary exposure, constant effect 2; target ATT";
    s.p = 2;
    s.x_mean = Eigen::VectorXd::Zero(2);
    s.x_cov = Eigen::MatrixXd::Identity(2, 2);
    s.treatment_family = TreatmentFamily::LogisticBernoulli;
    s.treatment_terms = linear_terms(2);
    s.gamma = vec({-0.3, 0.8, 0.5});
    s.outcome_terms = {{}, {0}, {1}, {0, 0}};
    s.xi = vec({1.0, 1.0, -1.0, 0.5});
    s.effect_terms = hetero ? Terms{{0}} : Terms{{}};
    s.psi = hetero ? vec({1.0}) : vec({2.0});
    s.analysis_treatment_terms = linear_terms(2);
    s.score_scale = ScoreScale::Probability;
    s.estimand = EstimandKind::ATT;
    out.push_back(s);
  }

  {
    ScenarioSpec s;
    s.name = "appA-balance";
    s.description = "propensity expit(x1 + x2); balance diagnostic example";
    s.p = 2;
    s.x_mean = Eigen::VectorXd::Zero(2);
    s.x_cov = Eigen::MatrixXd::Identity(2, 2);
    s.treatment_family = TreatmentFamily::LogisticBernoulli;
    s.treatment_terms = {{0}, {1}};
    s.gamma = vec({1.0, 1.0});
    s.outcome_terms = {{}, {0}, {1}};
    s.xi = vec({0.0, 1.0, 1.0});
    s.effect_terms = {{}};
    s.psi = vec({1.0});
    s.analysis_treatment_terms = {{0}, {1}};
    s.score_scale = ScoreScale::Probability;
    out.push_back(s);
  }

  for (auto& s : out) s.finalize();
  return out;
}

// E[prod_k X_{i_k}] for Gaussian X, degree <= 3; nullopt beyond.
std::optional<double> gaussian_moment(const Monomial& m, const Eigen::VectorXd& mu, const Eigen::MatrixXd& s) {
  switch (m.size()) {
    case 0:
      return 1.0;
    case 1:
      return mu[m[0]];
    case 2:
      return s(m[0], m[1]) + mu[m[0]] * mu[m[1]];
    case 3: {
      const int a = m[0], b = m[1], c = m[2];
      return mu[a] * mu[b] * mu[c] + mu[a] * s(b, c) + mu[b] * s(a, c) + mu[c] * s(a, b);
    }
    default:
      return std::nullopt;
  }
}

Eigen::MatrixXd draw_confounders(const ScenarioSpec& spec, Eigen::Index n, CounterRng rng) {
  Eigen::MatrixXd x(n, spec.p);
  Eigen::VectorXd e(spec.p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < spec.p; ++j) e[j] = rng.normal();
    x.row(i) = (spec.x_mean + spec.x_chol * e).transpose();
  }
  return x;
}

std::string fingerprint(const ScenarioSpec& s) {
  std::ostringstream os;
  os.precision(17);
  os << s.name << '|' << s.gamma.transpose() << '|' << s.psi.transpose() << '|' << s.xi.transpose() << '|';
  for (const auto& t : s.effect_terms) os << term_name(t) << ',';
  for (const auto& t : s.treatment_terms) os << term_name(t) << ',';
  return os.str();
}

}  // namespace

std::string term_name(const Monomial& term) {
  if (term.empty()) return "1";
  std::string out;
  for (int j : term) out += "x" + std::to_string(j + 1);
  return out;
}

Eigen::MatrixXd expand_terms(const Eigen::MatrixXd& x, const Terms& terms) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t k = 0; k < terms.size(); ++k) {
    auto col = out.col(static_cast<Eigen::Index>(k));
    col.setOnes();
    for (int j : terms[k]) {
      if (j < 0 || j >= x.cols()) throw InvalidArgument("expand_terms: confounder index out of range");
      col.array() *= x.col(j).array();
    }
  }
  return out;
}

Terms raw_confounders(int p, bool with_intercept) {
  Terms t;
  if (with_intercept) t.push_back({});
  for (int j = 0; j < p; ++j) t.push_back({j});
  return t;
}

Eigen::Vector4d SequentialLaw::counterfactual_means() const {
  Eigen::Vector4d out;
  const int cells[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (int c = 0; c < 4; ++c) {
    const double z1 = cells[c][0], z2 = cells[c][1];
    const double x2 = x2_coef[0] + x2_coef[1] * x1_mean + x2_coef[2] * z1;
    out[c] = y_coef[0] + y_coef[1] * x1_mean + y_coef[2] * z1 + y_coef[3] * x2 + y_coef[4] * z2;
  }
  return out;
}

Eigen::VectorXd ScenarioSpec::analysis_gamma() const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(analysis_treatment_terms.size()));
  for (std::size_t k = 0; k < treatment_terms.size(); ++k) {
    bool found = false;
    for (std::size_t a = 0; a < analysis_treatment_terms.size(); ++a) {
      if (analysis_treatment_terms[a] == treatment_terms[k]) {
        g[static_cast<Eigen::Index>(a)] = gamma[static_cast<Eigen::Index>(k)];
        found = true;
      }
    }
    if (!found && gamma[static_cast<Eigen::Index>(k)] != 0.0)
      throw InvalidArgument(name + ": analysis exposure terms do not contain " + term_name(treatment_terms[k]));
  }
  return g;
}

ScenarioSpec ScenarioSpec::with_effect(double tau) const {
  ScenarioSpec s = *this;
  s.effect_terms = {{}};
  s.psi = vec({tau});
  return s;
}

ScenarioSpec ScenarioSpec::randomized(double intercept) const {
  ScenarioSpec s = *this;
  if (treatment_family == TreatmentFamily::TwoStageSequential) {
    s.sequential.g1 = Eigen::Vector2d(intercept, 0.0);
    s.sequential.g2 = Eigen::Vector2d(intercept, 0.0);
  } else {
    s.treatment_terms = {{}};
    s.gamma = vec({intercept});
    bool has_intercept = false;
    for (const auto& t : s.analysis_treatment_terms) has_intercept = has_intercept || t.empty();
    if (!has_intercept) s.analysis_treatment_terms.insert(s.analysis_treatment_terms.begin(), Monomial{});
  }
  return s;
}

void ScenarioSpec::finalize() {
  auto fail = [&](const std::string& what) { throw InvalidArgument(name + ": " + what); };
  if (p < 1) fail("confounder count must be positive");
  if (treatment_family == TreatmentFamily::TwoStageSequential) {
    if (p != 2) fail("sequential scenarios carry exactly two confounders");
    return;
  }
  if (x_mean.size() != p || x_cov.rows() != p || x_cov.cols() != p) fail("confounder law dimension mismatch");
  if (!x_cov.isApprox(x_cov.transpose())) fail("covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(x_cov);
  if (llt.info() != Eigen::Success) fail("covariance is not positive definite");
  x_chol = llt.matrixL();
  if (gamma.size() != static_cast<Eigen::Index>(treatment_terms.size())) fail("gamma length mismatch");
  if (xi.size() != static_cast<Eigen::Index>(outcome_terms.size())) fail("xi length mismatch");
  if (psi.size() != static_cast<Eigen::Index>(effect_terms.size())) fail("psi length mismatch");
  auto check_terms = [&](const Terms& terms) {
    for (const auto& t : terms)
      for (int j : t)
        if (j < 0 || j >= p) fail("term index out of range");
  };
  check_terms(treatment_terms);
  check_terms(outcome_terms);
  check_terms(effect_terms);
  check_terms(analysis_treatment_terms);
  (void)analysis_gamma();
  if (!(treatment_sd > 0) || !(outcome_sd > 0)) fail("error scales must be positive");
}

void Dataset::validate(bool binary_treatment) const {
  const auto n = x.rows();
  if (z.rows() != n || y.size() != n) throw InvalidArgument("dataset: container lengths differ");
  if (!x.allFinite() || !z.allFinite() || !y.allFinite()) throw InvalidArgument("dataset: non-finite entries");
  if (binary_treatment && ((z.array() != 0.0) && (z.array() != 1.0)).any())
    throw InvalidArgument("dataset: binary treatment outside {0, 1}");
}

const std::vector<ScenarioSpec>& list_scenarios() {
  static const std::vector<ScenarioSpec> registry = build_registry();
  return registry;
}

const ScenarioSpec& find_scenario(const std::string& name) {
  for (const auto& s : list_scenarios())
    if (s.name == name) return s;
  throw UnknownScenario(name);
}

Dataset generate_dataset(const std::string& scenario, Eigen::Index n, std::uint64_t seed) {
  return generate_dataset(find_scenario(scenario), n, seed);
}

Dataset generate_dataset(const ScenarioSpec& spec, Eigen::Index n, std::uint64_t seed) {
  if (n < spec.p + 2) throw InvalidArgument("generate_dataset: n must be at least p + 2");
  const CounterRng root(seed);
  Dataset d;
  d.scenario = spec.name;
  d.seed = seed;

  if (spec.treatment_family == TreatmentFamily::TwoStageSequential) {
    const auto& law = spec.sequential;
    CounterRng xr = root.split(1), zr = root.split(2), yr = root.split(3);
    d.x.resize(n, 2);
    d.z.resize(n, 2);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x1 = law.x1_mean + law.x1_sd * xr.normal();
      const double z1 = zr.bernoulli(expit(law.g1[0] + law.g1[1] * x1)) ? 1.0 : 0.0;
      const double x2 = law.x2_coef[0] + law.x2_coef[1] * x1 + law.x2_coef[2] * z1 + law.x2_sd * xr.normal();
      const double z2 = zr.bernoulli(expit(law.g2[0] + law.g2[1] * x2)) ? 1.0 : 0.0;
      d.x(i, 0) = x1;
      d.x(i, 1) = x2;
      d.z(i, 0) = z1;
      d.z(i, 1) = z2;
      d.y[i] = law.y_coef[0] + law.y_coef[1] * x1 + law.y_coef[2] * z1 + law.y_coef[3] * x2 +
               law.y_coef[4] * z2 + law.y_sd * yr.normal();
    }
    return d;
  }

  d.x = draw_confounders(spec, n, root.split(1));
  const Eigen::VectorXd treat_mean = expand_terms(d.x, spec.treatment_terms) * spec.gamma;
  d.z.resize(n, 1);
  CounterRng zr = root.split(2);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.z(i, 0) = spec.treatment_family == TreatmentFamily::LinearNormal
                    ? treat_mean[i] + spec.treatment_sd * zr.normal()
                    : (zr.bernoulli(expit(treat_mean[i])) ? 1.0 : 0.0);
  }
  const Eigen::VectorXd base = expand_terms(d.x, spec.outcome_terms) * spec.xi;
  const Eigen::VectorXd effect = expand_terms(d.x, spec.effect_terms) * spec.psi;
  CounterRng yr = root.split(3);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = base[i] + d.z(i, 0) * effect[i];
    if (spec.outcome_family == OutcomeFamily::Normal) {
      d.y[i] = eta + spec.outcome_sd * yr.normal();
    } else {
      d.y[i] = static_cast<double>(std::poisson_distribution<long long>(std::exp(eta))(yr));
    }
  }
  return d;
}

OracleResult counterfactual_oracle(const ScenarioSpec& spec, std::int64_t draws, std::uint64_t seed) {
  if (draws < 2) throw InvalidArgument("counterfactual_oracle: need at least two draws");
  const CounterRng root(seed);
  OracleResult out;

  if (spec.estimand == EstimandKind::CounterfactualMeans) {
    const auto& law = spec.sequential;
    out.estimate.resize(4);
    out.standard_error.resize(4);
    const int cells[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (int c = 0; c < 4; ++c) {
      CounterRng r = root.split(static_cast<std::uint64_t>(c));
      double sum = 0, sumsq = 0;
      for (std::int64_t k = 0; k < draws; ++k) {
        const double x1 = law.x1_mean + law.x1_sd * r.normal();
        const double x2 = law.x2_coef[0] + law.x2_coef[1] * x1 + law.x2_coef[2] * cells[c][0] + law.x2_sd * r.normal();
        const double y = law.y_coef[0] + law.y_coef[1] * x1 + law.y_coef[2] * cells[c][0] + law.y_coef[3] * x2 +
                         law.y_coef[4] * cells[c][1] + law.y_sd * r.normal();
        sum += y;
        sumsq += y * y;
      }
      const double m = sum / static_cast<double>(draws);
      out.estimate[c] = m;
      out.standard_error[c] = std::sqrt(std::max(0.0, sumsq / static_cast<double>(draws) - m * m) / static_cast<double>(draws));
    }
    return out;
  }

  // Stream the draws in blocks to bound memory.
  const std::int64_t block = 1 << 16;
  CounterRng xr = root.split(1), zr = root.split(2);
  double sum = 0, sumsq = 0, count = 0;
  double s0 = 0, s1 = 0, s00 = 0, s11 = 0, s01 = 0;
  for (std::int64_t start = 0; start < draws; start += block) {
    const auto m = static_cast<Eigen::Index>(std::min(block, draws - start));
    Eigen::MatrixXd x(m, spec.p);
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::VectorXd e(spec.p);
      for (int j = 0; j < spec.p; ++j) e[j] = xr.normal();
      x.row(i) = (spec.x_mean + spec.x_chol * e).transpose();
    }
    const Eigen::VectorXd effect = expand_terms(x, spec.effect_terms) * spec.psi;
    if (spec.estimand == EstimandKind::LogRateRatio) {
      const Eigen::VectorXd base = expand_terms(x, spec.outcome_terms) * spec.xi;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double a = std::exp(base[i] + effect[i]), b = std::exp(base[i]);
        s1 += a;
        s0 += b;
        s11 += a * a;
        s00 += b * b;
        s01 += a * b;
      }
      count += static_cast<double>(m);
      continue;
    }
    Eigen::VectorXd treat_mean;
    if (spec.estimand == EstimandKind::ATT) treat_mean = expand_terms(x, spec.treatment_terms) * spec.gamma;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (spec.estimand == EstimandKind::ATT && !zr.bernoulli(expit(treat_mean[i]))) continue;
      // Potential outcomes share their noise, so Y(1) - Y(0) is the effect.
      sum += effect[i];
      sumsq += effect[i] * effect[i];
      count += 1;
    }
  }
  out.estimate.resize(1);
  out.standard_error.resize(1);
  if (spec.estimand == EstimandKind::LogRateRatio) {
    const double a = s1 / count, b = s0 / count;
    const double va = s11 / count - a * a, vb = s00 / count - b * b, cab = s01 / count - a * b;
    out.estimate[0] = std::log(a / b);
    out.standard_error[0] = std::sqrt(std::max(0.0, va / (a * a) + vb / (b * b) - 2 * cab / (a * b)) / count);
    return out;
  }
  const double m = sum / count;
  out.estimate[0] = m;
  out.standard_error[0] = std::sqrt(std::max(0.0, sumsq / count - m * m) / count);
  return out;
}

Eigen::VectorXd true_estimand(const ScenarioSpec& spec) {
  if (spec.estimand == EstimandKind::CounterfactualMeans) return spec.sequential.counterfactual_means();
  const bool constant_effect = spec.effect_terms.size() == 1 && spec.effect_terms[0].empty();
  if (constant_effect) return vec({spec.psi[0]});
  if (spec.estimand == EstimandKind::ATE && spec.outcome_family == OutcomeFamily::Normal) {
    double ate = 0;
    bool closed = true;
    for (std::size_t k = 0; k < spec.effect_terms.size() && closed; ++k) {
      const auto m = gaussian_moment(spec.effect_terms[k], spec.x_mean, spec.x_cov);
      if (m) ate += spec.psi[static_cast<Eigen::Index>(k)] * *m;
      else closed = false;
    }
    if (closed) return vec({ate});
  }
  static std::mutex mutex;
  static std::map<std::string, Eigen::VectorXd> cache;
  const std::string key = fingerprint(spec);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  Eigen::VectorXd value = counterfactual_oracle(spec, 10'000'000, hash_name(key)).estimate;
  std::lock_guard lock(mutex);
  cache.emplace(key, value);
  return value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw InvalidArgument("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  for (Eigen::Index j = 0; j < data.p(); ++j) os << 'x' << (j + 1) << ',';
  os << 'z';
  for (Eigen::Index k = 1; k < data.z.cols(); ++k) os << ",z" << (k + 1);
  os << ",y\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.p(); ++j) os << format_double(data.x(i, j)) << ',';
    for (Eigen::Index k = 0; k < data.z.cols(); ++k) os << format_double(data.z(i, k)) << ',';
    os << format_double(data.y[i]) << '\n';
  }
}

}  // namespace causalbb
