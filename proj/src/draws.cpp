#include "causalbb/draws.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "causalbb/dgp.hpp"
#include "causalbb/errors.hpp"

namespace causalbb {

Eigen::Index PosteriorDraws::index(const std::string& name) const {
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return static_cast<Eigen::Index>(k);
  throw UnknownParameter(name);
}

bool PosteriorDraws::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

void PosteriorDraws::validate() const {
  if (draws.rows() < 1) throw InvalidArgument("posterior draws: no draws");
  if (draws.cols() != static_cast<Eigen::Index>(names.size()))
    throw InvalidArgument("posterior draws: names do not match columns");
  if (!draws.allFinite()) throw InvalidArgument("posterior draws: non-finite entries (" + engine + ")");
}

void PosteriorDraws::write_csv(std::ostream& os) const {
  for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
  os << '\n';
  for (Eigen::Index r = 0; r < draws.rows(); ++r) {
    for (Eigen::Index c = 0; c < draws.cols(); ++c) os << (c ? "," : "") << format_double(draws(r, c));
    os << '\n';
  }
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

DrawSummary summarize_draws(const PosteriorDraws& draws, const std::string& param, double level) {
  const Eigen::Index c = draws.index(param);
  if (draws.size() < 1) throw InvalidArgument("summarize_draws: no draws");
  std::vector<double> v(draws.draws.col(c).data(), draws.draws.col(c).data() + draws.size());
  DrawSummary s;
  s.point = draws.draws.col(c).mean();
  std::sort(v.begin(), v.end());
  const double tail = (1.0 - level) / 2.0;
  s.lo = quantile_sorted(v, tail);
  s.hi = quantile_sorted(v, 1.0 - tail);
  return s;
}

}  // namespace causalbb
