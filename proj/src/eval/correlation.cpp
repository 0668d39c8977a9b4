#include "slotbench/eval/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slotbench/errors.hpp"

namespace slotbench::eval {

std::string correlation_name(CorrelationKind kind) {
  return kind == CorrelationKind::kSpearman ? "spearman" : "pearson";
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("correlation: series lengths differ");
  if (x.size() < 3) throw InputError("correlation needs at least 3 points, got " + std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedResultError("correlation undefined: a series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("correlation: series lengths differ");
  return pearson(average_ranks(x), average_ranks(y));
}

double rank_correlation(const std::vector<double>& x, const std::vector<double>& y, CorrelationKind kind) {
  return kind == CorrelationKind::kSpearman ? spearman(x, y) : pearson(x, y);
}

}  // namespace slotbench::eval
