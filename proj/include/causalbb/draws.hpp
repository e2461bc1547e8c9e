#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace causalbb {

/// L sampled parameter vectors, one row per draw. Every inference engine
/// returns one of these.
struct PosteriorDraws {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;

  std::string engine;
  std::uint64_t dataset_seed = 0;
  double wall_time = 0.0;
  /// Weighted fits that needed the ridge fallback.
  long flagged_draws = 0;
  /// Weight draws that failed and were resampled.
  long resampled_draws = 0;

  [[nodiscard]] Eigen::Index size() const { return draws.rows(); }
  /// Column index of a parameter; throws UnknownParameter.
  [[nodiscard]] Eigen::Index index(const std::string& name) const;
  [[nodiscard]] bool has(const std::string& name) const;
  [[nodiscard]] Eigen::VectorXd column(const std::string& name) const { return draws.col(index(name)); }
  [[nodiscard]] Eigen::VectorXd mean() const { return draws.colwise().mean().transpose(); }

  /// Throws InvalidArgument on empty draws, name/column mismatch or non-finite entries.
  void validate() const;
  void write_csv(std::ostream& os) const;
};

struct DrawSummary {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Linear-interpolation sample quantile on sorted data, h = (L - 1) p.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Mean and equal-tailed 95% interval of one parameter.
DrawSummary summarize_draws(const PosteriorDraws& draws, const std::string& param, double level = 0.95);

}  // namespace causalbb
