#include "slotbench/eval/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "slotbench/errors.hpp"

namespace slotbench::eval {

namespace {

// Rows <= cols. Returns col_of_row.
std::vector<int> solve(const CostMatrix& a, int n, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace

Assignment hungarian_match(const CostMatrix& cost) {
  Assignment out;
  const int n = static_cast<int>(cost.size());
  if (n == 0) return out;
  const int m = static_cast<int>(cost[0].size());
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(cost[i].size()) != m) throw InputError("cost matrix rows have different lengths");
    for (int j = 0; j < m; ++j) {
      if (!std::isfinite(cost[i][j])) {
        throw InputError("cost matrix entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is not finite");
      }
    }
  }
  if (m == 0) return out;

  if (n <= m) {
    const auto col = solve(cost, n, m);
    for (int i = 0; i < n; ++i) out.pairs.emplace_back(i, col[i]);
  } else {
    CostMatrix t(m, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) t[j][i] = cost[i][j];
    }
    const auto row = solve(t, m, n);
    for (int j = 0; j < m; ++j) out.pairs.emplace_back(row[j], j);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (const auto& [i, j] : out.pairs) out.cost += cost[i][j];
  return out;
}

}  // namespace slotbench::eval
