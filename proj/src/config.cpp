#include "causalbb/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "causalbb/dgp.hpp"
#include "causalbb/errors.hpp"
#include "causalbb/harness.hpp"

namespace causalbb {

namespace {

const std::map<std::string, std::set<std::string>> kSections{
    {"study", {"scenarios", "estimators", "n", "R", "L", "clamp"}},
    {"run", {"seed", "workers", "output", "format"}},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string value) {
  value = trim(value);
  if (!value.empty() && value.front() == '[') {
    if (value.back() != ']') throw ValidationError("unterminated list: " + value);
    value = value.substr(1, value.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  T value{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ValidationError(field + ": not a valid number: '" + t + "'");
  return value;
}

// Section owning a bare key.
std::string section_of(const std::string& key) {
  for (const auto& [section, keys] : kSections)
    if (keys.count(key)) return section;
  return "";
}

struct RawConfig {
  std::map<std::string, std::string> values;
};

RawConfig read_raw(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(number);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) throw ParseError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) throw ParseError(where + ": key '" + key + "' outside a section");
    if (!kSections.at(section).count(key))
      throw ParseError(where + ": unknown key '" + key + "' in section [" + section + "]");
    if (raw.values.count(key)) throw ParseError(where + ": duplicate key '" + key + "'");
    raw.values[key] = trim(line.substr(eq + 1));
  }
  return raw;
}

void apply_override(RawConfig& raw, const std::string& key_in, const std::string& value) {
  std::string key = key_in;
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string section = key.substr(0, dot);
    key = key.substr(dot + 1);
    if (!kSections.count(section) || !kSections.at(section).count(key))
      throw ParseError("override: unknown key '" + key_in + "'");
  } else if (section_of(key).empty()) {
    throw ParseError("override: unknown key '" + key_in + "'");
  }
  raw.values[key] = value;
}

int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

RunConfig validate(const RawConfig& raw) {
  RunConfig c;
  const auto get = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = raw.values.find(key);
    if (it == raw.values.end()) return std::nullopt;
    return it->second;
  };

  if (auto v = get("scenarios")) c.scenarios = split_list(*v);
  if (c.scenarios.empty()) throw ValidationError("scenarios: at least one scenario is required");
  for (const auto& s : c.scenarios) {
    try {
      find_scenario(s);
    } catch (const UnknownScenario&) {
      throw ValidationError("scenarios: unknown scenario '" + s + "'");
    }
  }

  if (auto v = get("estimators")) c.estimators = split_list(*v);
  if (c.estimators.empty()) throw ValidationError("estimators: at least one estimator is required");
  if (std::set<std::string>(c.estimators.begin(), c.estimators.end()).size() != c.estimators.size())
    throw ValidationError("estimators: duplicate entries");

  if (auto v = get("n"))
    for (const auto& item : split_list(*v)) c.n_list.push_back(parse_number<Eigen::Index>("n", item));
  if (c.n_list.empty()) throw ValidationError("n: at least one sample size is required");

  if (auto v = get("R")) c.R = parse_number<int>("R", *v);
  if (c.R < 1) throw ValidationError("R: must be at least 1");
  if (auto v = get("L")) c.L = parse_number<int>("L", *v);
  if (c.L < 1) throw ValidationError("L: must be at least 1");
  if (auto v = get("clamp"); v && !v->empty()) {
    c.clamp = parse_number<double>("clamp", *v);
    if (!(*c.clamp > 1.0)) throw ValidationError("clamp: must exceed 1");
  }

  if (auto v = get("seed")) {
    c.master_seed = parse_number<std::uint64_t>("seed", *v);
  } else if (const char* env = std::getenv("CAUSALBB_SEED"); env && *env) {
    c.master_seed = parse_number<std::uint64_t>("CAUSALBB_SEED", env);
  } else {
    c.master_seed = kDefaultSeed;
  }
  c.workers = default_workers();
  if (auto v = get("workers")) c.workers = parse_number<int>("workers", *v);
  if (c.workers < 1) throw ValidationError("workers: must be at least 1");
  if (auto v = get("output")) c.output_dir = *v;
  if (c.output_dir.empty()) throw ValidationError("output: must not be empty");
  if (auto v = get("format")) {
    if (*v == "csv") {
      c.format = OutputFormat::Csv;
    } else if (*v == "text") {
      c.format = OutputFormat::Text;
    } else {
      throw ValidationError("format: expected csv or text, got '" + *v + "'");
    }
  }

  // Every estimator must parse and run on every scenario and n.
  for (const auto& token : c.estimators) {
    EstimatorSpec est;
    try {
      est = parse_estimator(token, c.L, c.clamp);
    } catch (const InvalidArgument& e) {
      throw ValidationError(std::string("estimators: ") + e.what());
    }
    for (const auto& s : c.scenarios) {
      const ScenarioSpec& spec = find_scenario(s);
      try {
        check_compatible(est, spec);
      } catch (const ValidationError& e) {
        throw ValidationError(std::string("estimators: ") + e.what());
      }
      for (Eigen::Index n : c.n_list)
        if (n < spec.p + 2) throw ValidationError("n: " + std::to_string(n) + " is too small for " + s);
    }
  }
  return c;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

struct Preset {
  const char* name;
  const char* text;
};

// Replicate counts are the paper's divided by kPresetScale.
const Preset kPresets[] = {
    {"table1",
     "[study]\nscenarios = ex1-normal\nestimators = UN, UN-ext, JT, JT-ext, CF, CF-ext, 2S, 2S-ext, Correct\n"
     "n = 200, 500, 1000, 2000\nR = 250\nL = 1000\n[run]\noutput = out/table1\n"},
    {"table2",
     "[study]\nscenarios = ex1-normal\n"
     "estimators = PS@true, PS-ext@true, CF@par, CF-ext@par, 2S@par, 2S-ext@par, CF@ubb, CF-ext@ubb, "
     "2S@ubb, 2S-ext@ubb, 2S@lbb, 2S-ext@lbb\n"
     "n = 200, 500, 1000, 2000\nR = 250\nL = 1000\n[run]\noutput = out/table2\n"},
    {"table3",
     "[study]\nscenarios = ex2-s1, ex2-s2, ex2-s3\n"
     "estimators = UN, UN-ext, JT, JT-ext, CF, CF-ext, 2S, 2S-ext, Correct\n"
     "n = 200, 500, 1000, 2000\nR = 250\nL = 1000\n[run]\noutput = out/table3\n"},
    {"table4",
     "[study]\nscenarios = ex2-s1, ex2-s2, ex2-s3\n"
     "estimators = PS@true, PS-ext@true, CF@par, CF-ext@par, 2S@par, 2S-ext@par, CF@ubb, CF-ext@ubb, "
     "2S@ubb, 2S-ext@ubb, 2S@lbb, 2S-ext@lbb\n"
     "n = 200, 500, 1000, 2000\nR = 250\nL = 2000\n[run]\noutput = out/table4\n"},
    {"table5-2s",
     "[study]\nscenarios = ex3-hetero\nestimators = 2S-hetero@lbb\n"
     "n = 200, 500, 1000, 2000\nR = 500\nL = 1000\n[run]\noutput = out/table5-2s\n"},
    {"tableB1",
     "[study]\nscenarios = appB-normal-z\nestimators = UN, PS, 2S, CF\n"
     "n = 100, 200, 500, 1000\nR = 250\nL = 1000\n[run]\noutput = out/tableB1\n"},
    {"tableB2",
     "[study]\nscenarios = appB-binary-z\nestimators = Correct, 2S, 2S@lbb\n"
     "n = 200, 500, 1000, 2000\nR = 500\nL = 1000\n[run]\noutput = out/tableB2\n"},
};

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin, const ConfigOverrides& overrides) {
  RawConfig raw = read_raw(text, origin);
  for (const auto& [key, value] : overrides) apply_override(raw, key, value);
  return validate(raw);
}

RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot read config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path, overrides);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

std::string preset_text(const std::string& name) {
  for (const auto& p : kPresets)
    if (name == p.name) return p.text;
  throw ValidationError("preset: unknown preset '" + name + "'");
}

std::string config_to_text(const RunConfig& c) {
  std::ostringstream os;
  std::vector<std::string> ns;
  for (auto n : c.n_list) ns.push_back(std::to_string(n));
  os << "[study]\n"
     << "scenarios = " << join(c.scenarios) << '\n'
     << "estimators = " << join(c.estimators) << '\n'
     << "n = " << join(ns) << '\n'
     << "R = " << c.R << '\n'
     << "L = " << c.L << '\n';
  if (c.clamp) os << "clamp = " << format_double(*c.clamp) << '\n';
  os << "\n[run]\n"
     << "seed = " << c.master_seed << '\n'
     << "workers = " << c.workers << '\n'
     << "output = " << c.output_dir << '\n'
     << "format = " << (c.format == OutputFormat::Csv ? "csv" : "text") << '\n';
  return os.str();
}

namespace {

std::string vector_text(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

std::string terms_text(const Terms& terms) {
  std::vector<std::string> names;
  for (const auto& t : terms) names.push_back(term_name(t));
  return join(names);
}

}  // namespace

std::string scenario_to_text(const ScenarioSpec& spec) {
  std::ostringstream os;
  os << "[scenario." << spec.name << "]\n"
     << "description = " << spec.description << '\n'
     << "p = " << spec.p << '\n';
  if (spec.x_mean.size() > 0) {
    os << "x_mean = " << vector_text(spec.x_mean) << '\n';
    os << "x_cov = " << vector_text(spec.x_cov.reshaped()) << '\n';
  }
  switch (spec.treatment_family) {
    case TreatmentFamily::LinearNormal:
      os << "treatment = linear-normal\ntreatment_sd = " << format_double(spec.treatment_sd) << '\n';
      break;
    case TreatmentFamily::LogisticBernoulli:
      os << "treatment = logistic-bernoulli\n";
      break;
    case TreatmentFamily::TwoStageSequential: {
      const auto& q = spec.sequential;
      os << "treatment = two-stage-sequential\n"
         << "x1_law = " << format_double(q.x1_mean) << ", " << format_double(q.x1_sd) << '\n'
         << "g1 = " << vector_text(q.g1) << '\n'
         << "x2_coef = " << vector_text(q.x2_coef) << '\n'
         << "x2_sd = " << format_double(q.x2_sd) << '\n'
         << "g2 = " << vector_text(q.g2) << '\n'
         << "y_coef = " << vector_text(q.y_coef) << '\n'
         << "y_sd = " << format_double(q.y_sd) << '\n';
      break;
    }
  }
  if (spec.treatment_family != TreatmentFamily::TwoStageSequential) {
    os << "treatment_terms = " << terms_text(spec.treatment_terms) << '\n'
       << "gamma = " << vector_text(spec.gamma) << '\n'
       << "outcome = " << (spec.outcome_family == OutcomeFamily::Normal ? "normal" : "poisson") << '\n'
       << "outcome_terms = " << terms_text(spec.outcome_terms) << '\n'
       << "xi = " << vector_text(spec.xi) << '\n'
       << "effect_terms = " << terms_text(spec.effect_terms) << '\n'
       << "psi = " << vector_text(spec.psi) << '\n';
    if (spec.outcome_family == OutcomeFamily::Normal) os << "outcome_sd = " << format_double(spec.outcome_sd) << '\n';
  }
  const char* estimand = "ate";
  switch (spec.estimand) {
    case EstimandKind::ATE: estimand = "ate"; break;
    case EstimandKind::ATT: estimand = "att"; break;
    case EstimandKind::LogRateRatio: estimand = "log-rate-ratio"; break;
    case EstimandKind::CounterfactualMeans: estimand = "counterfactual-means"; break;
  }
  os << "estimand = " << estimand << '\n';
  return os.str();
}

}  // namespace causalbb
