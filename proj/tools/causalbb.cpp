#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "causalbb/commands.hpp"
#include "causalbb/errors.hpp"

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string presets_help() {
  std::string out = "Named experiment (";
  out += join(causalbb::preset_names());
  out += ")";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace causalbb;
  CLI::App app{"Bayesian propensity-score estimators and replication studies"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a replication study and write metrics.csv and replicates.csv");
  std::string config_path, preset;
  std::vector<std::string> scenarios, estimators, ns;
  std::string seed, workers, reps, draws, output, format, clamp;
  run->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  run->add_option("--preset", preset, presets_help());
  run->add_option("--scenario", scenarios, "Scenario names (overrides the config)")->delimiter(',');
  run->add_option("--estimator", estimators, "Estimator tokens (overrides the config)")->delimiter(',');
  run->add_option("--n", ns, "Sample sizes")->delimiter(',');
  run->add_option("--R", reps, "Replicates per cell");
  run->add_option("--L", draws, "Posterior draws per replicate");
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--workers", workers, "Worker threads");
  run->add_option("--output", output, "Output directory");
  run->add_option("--format", format, "csv or text");
  run->add_option("--clamp", clamp, "Upper clamp on inverse-probability weights");
  bool print_config = false;
  run->add_flag("--print-config", print_config, "Print the resolved config and exit");

  auto* table = app.add_subcommand("table", "Render metrics CSVs as aligned tables");
  std::vector<std::string> table_paths;
  table->add_option("files", table_paths, "metrics.csv files")->required();

  auto* scen = app.add_subcommand("scenarios", "List the scenario registry");
  bool as_config = false;
  scen->add_flag("--config-format", as_config, "Print entries in the config format");

  auto* est = app.add_subcommand("estimators", "List estimator tokens and engines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) {
      if (!config_path.empty() && !preset.empty()) throw ValidationError("use either --config or --preset");
      ConfigOverrides overrides;
      const auto add = [&](const char* key, const std::string& value) {
        if (!value.empty()) overrides.emplace_back(key, value);
      };
      add("scenarios", join(scenarios));
      add("estimators", join(estimators));
      add("n", join(ns));
      add("R", reps);
      add("L", draws);
      add("seed", seed);
      add("workers", workers);
      add("output", output);
      add("format", format);
      add("clamp", clamp);
      const RunConfig config = !config_path.empty() ? parse_config(config_path, overrides)
                               : !preset.empty()    ? parse_config_text(preset_text(preset), preset, overrides)
                                                    : parse_config_text("", "<command line>", overrides);
      if (print_config) {
        std::cout << config_to_text(config);
        return kExitOk;
      }
      return cmd_run(config, std::cout, std::cerr);
    }
    if (*table) return cmd_table(table_paths, std::cout);
    if (*scen) return cmd_scenarios(std::cout, as_config);
    if (*est) return cmd_estimators(std::cout);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
