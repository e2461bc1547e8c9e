#include "causalbb/designs.hpp"

#include <algorithm>
#include <array>

#include "causalbb/errors.hpp"
#include "causalbb/numopt.hpp"

namespace causalbb {

namespace {

constexpr std::array<std::pair<DesignTag, const char*>, 12> kDesignNames{{
    {DesignTag::UN, "UN"},
    {DesignTag::UNext, "UN-ext"},
    {DesignTag::JT, "JT"},
    {DesignTag::JText, "JT-ext"},
    {DesignTag::CF, "CF"},
    {DesignTag::CFext, "CF-ext"},
    {DesignTag::TwoStep, "2S"},
    {DesignTag::TwoStepExt, "2S-ext"},
    {DesignTag::Correct, "Correct"},
    {DesignTag::PS, "PS"},
    {DesignTag::PSext, "PS-ext"},
    {DesignTag::TwoStepHetero, "2S-hetero"},
}};

bool is_ext(DesignTag tag) {
  return tag == DesignTag::UNext || tag == DesignTag::JText || tag == DesignTag::CFext ||
         tag == DesignTag::TwoStepExt || tag == DesignTag::PSext;
}

std::string suffixed(const char* base, const Monomial& m) {
  return m.empty() ? std::string(base) : std::string(base) + ":" + term_name(m);
}

}  // namespace

std::string design_name(DesignTag tag) {
  for (const auto& [t, name] : kDesignNames)
    if (t == tag) return name;
  throw InvalidArgument("unknown design tag");
}

DesignTag parse_design(const std::string& name) {
  for (const auto& [t, n] : kDesignNames)
    if (name == n) return t;
  throw InvalidArgument("unknown outcome design: " + name);
}

const std::vector<DesignTag>& all_designs() {
  static const std::vector<DesignTag> tags = [] {
    std::vector<DesignTag> out;
    for (const auto& entry : kDesignNames) out.push_back(entry.first);
    return out;
  }();
  return tags;
}

bool is_joint(DesignTag tag) { return tag == DesignTag::JT || tag == DesignTag::JText; }
bool is_cut(DesignTag tag) { return tag == DesignTag::CF || tag == DesignTag::CFext; }
bool uses_score(DesignTag tag) {
  return tag != DesignTag::UN && tag != DesignTag::UNext && tag != DesignTag::Correct;
}
bool uses_true_score(DesignTag tag) { return tag == DesignTag::PS || tag == DesignTag::PSext; }

std::vector<std::string> OutcomeDesign::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

bool OutcomeDesign::has_score() const {
  return std::any_of(columns.begin(), columns.end(),
                     [](const DesignColumn& c) { return c.kind == DesignColumn::Kind::Score; });
}

Eigen::MatrixXd OutcomeDesign::matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& b) const {
  const auto n = x.rows();
  if (z.size() != n) throw InvalidArgument("outcome design: treatment length mismatch");
  if (has_score() && b.size() != n) throw InvalidArgument("outcome design: score length mismatch");
  Eigen::MatrixXd out(n, size());
  for (Eigen::Index k = 0; k < size(); ++k) {
    const auto& c = columns[static_cast<std::size_t>(k)];
    auto col = out.col(k);
    col.setOnes();
    for (int j : c.term) col.array() *= x.col(j).array();
    if (c.kind == DesignColumn::Kind::Treatment) col.array() *= z.array();
    if (c.kind == DesignColumn::Kind::Score) col.array() *= b.array();
  }
  return out;
}

Eigen::MatrixXd OutcomeDesign::modifiers(const Eigen::MatrixXd& x) const {
  Terms terms;
  for (const auto& c : columns)
    if (c.kind == DesignColumn::Kind::Treatment) terms.push_back(c.term);
  return expand_terms(x, terms);
}

double OutcomeDesign::effect(const Eigen::VectorXd& coef, const Eigen::VectorXd& modifier_means) const {
  double out = 0;
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < size(); ++j)
    if (columns[static_cast<std::size_t>(j)].kind == DesignColumn::Kind::Treatment) out += coef[j] * modifier_means[k++];
  return out;
}

OutcomeDesign make_outcome_design(DesignTag tag, const ScenarioSpec& spec) {
  using Kind = DesignColumn::Kind;
  if (spec.treatment_family == TreatmentFamily::TwoStageSequential)
    throw InvalidArgument("outcome designs need a single-treatment scenario");
  OutcomeDesign d;
  d.tag = tag;
  d.columns.push_back({Kind::Intercept, {}, "b0"});

  if (tag == DesignTag::Correct) {
    for (const auto& t : spec.outcome_terms)
      if (!t.empty()) d.columns.push_back({Kind::Covariate, t, term_name(t)});
    for (const auto& t : spec.effect_terms) d.columns.push_back({Kind::Treatment, t, suffixed("tau", t)});
    return d;
  }
  if (tag == DesignTag::TwoStepHetero) {
    for (const auto& t : spec.effect_terms) d.columns.push_back({Kind::Treatment, t, suffixed("tau", t)});
    for (const auto& t : spec.effect_terms) d.columns.push_back({Kind::Score, t, suffixed("phi", t)});
    return d;
  }
  if (is_ext(tag))
    for (int j = 0; j < spec.p; ++j) d.columns.push_back({Kind::Covariate, {j}, term_name({j})});
  if (uses_score(tag)) d.columns.push_back({Kind::Score, {}, "phi"});
  d.columns.push_back({Kind::Treatment, {}, "tau"});
  return d;
}

Eigen::VectorXd TreatmentModel::score(const Eigen::MatrixXd& f, const Eigen::VectorXd& gamma) const {
  Eigen::VectorXd eta = f * gamma;
  if (scale == ScoreScale::Probability) eta = eta.unaryExpr([](double e) { return expit(e); });
  return eta;
}

Eigen::VectorXd TreatmentModel::propensity(const Eigen::MatrixXd& f, const Eigen::VectorXd& gamma) const {
  if (!binary()) throw InvalidArgument("propensity requires a binary exposure model");
  return (f * gamma).unaryExpr([](double e) { return expit(e); });
}

std::vector<std::string> TreatmentModel::names() const {
  std::vector<std::string> out;
  for (const auto& t : terms) out.push_back(suffixed("gamma", t));
  return out;
}

TreatmentModel make_treatment_model(const ScenarioSpec& spec) {
  if (spec.treatment_family == TreatmentFamily::TwoStageSequential)
    throw InvalidArgument("sequential scenarios have no single exposure model");
  TreatmentModel m;
  m.family = spec.treatment_family;
  m.terms = spec.analysis_treatment_terms;
  m.scale = spec.score_scale;
  m.true_gamma = spec.analysis_gamma();
  return m;
}

}  // namespace causalbb
