#pragma once

// Run configuration: a sectioned key = value text format with strict keys.
//
//   [study]
//   scenarios  = ex1-normal
//   estimators = UN, 2S, Correct
//   n          = 200, 2000
//   R          = 250
//   L          = 1000
//   clamp      = 50          (optional)
//
//   [run]
//   seed    = 1
//   workers = 8
//   output  = out/table1
//   format  = csv | text
//
// '#' starts a comment. Lists are comma separated, optionally in brackets.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace causalbb {

enum class OutputFormat { Csv, Text };

struct RunConfig {
  std::vector<std::string> scenarios;
  std::vector<std::string> estimators;
  std::vector<Eigen::Index> n_list;
  int R = 100;
  int L = 1000;
  std::uint64_t master_seed = 0;
  int workers = 1;
  std::string output_dir = "causalbb-out";
  std::optional<double> clamp;
  OutputFormat format = OutputFormat::Csv;
};

/// Used when neither the file, the overrides nor CAUSALBB_SEED give a seed.
inline constexpr std::uint64_t kDefaultSeed = 20240601;

/// key = value pairs applied after the file; keys are bare ("seed") or
/// qualified ("run.seed").
using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses and validates. Throws ParseError (with line and key) for syntax
/// errors and unknown keys, ValidationError naming the field otherwise.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>",
                            const ConfigOverrides& overrides = {});
/// Reads the file (ParseError when unreadable) and parses it.
RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Preset experiments; replicate counts are the paper's divided by kPresetScale.
inline constexpr int kPresetScale = 4;
std::vector<std::string> preset_names();
/// Config text of a preset; throws ValidationError for an unknown name.
std::string preset_text(const std::string& name);

/// Renders a config back into the text format.
std::string config_to_text(const RunConfig& config);

struct ScenarioSpec;
/// Registry entry as a [scenario.<name>] section of the same format.
std::string scenario_to_text(const ScenarioSpec& spec);

}  // namespace causalbb
