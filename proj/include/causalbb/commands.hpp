#pragma once

// Command implementations behind the executable; each returns an exit status.

#include <iosfwd>
#include <string>
#include <vector>

#include "causalbb/config.hpp"
#include "causalbb/harness.hpp"

namespace causalbb {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitFailure = 3;

/// Runs every scenario of the config and writes metrics.csv and
/// replicates.csv (plus table.txt for the text format) into the output
/// directory. Returns kExitFailure when any cell failed.
int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Reads metrics CSVs and prints the aligned table. Throws SchemaError.
int cmd_table(const std::vector<std::string>& paths, std::ostream& out);

int cmd_scenarios(std::ostream& out, bool as_config);
int cmd_estimators(std::ostream& out);

/// Parses a metrics CSV with the harness header; throws SchemaError.
std::vector<MetricsRow> read_metrics_csv(std::istream& in, const std::string& origin = "<csv>");

/// Per scenario, one block per metric (bias, sd, rmse, coverage) with
/// estimator rows and n columns; fixed three decimals.
std::string render_table(const std::vector<MetricsRow>& rows);

}  // namespace causalbb
