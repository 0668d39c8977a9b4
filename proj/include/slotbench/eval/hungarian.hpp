#pragma once

#include <utility>
#include <vector>

namespace slotbench::eval {

/// Row-major n x m cost matrix; rows are ground-truth objects, columns slots.
using CostMatrix = std::vector<std::vector<double>>;

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row, min(n, m) of them
  double cost = 0.0;                       // sum of the paired entries in row order
};

/// Minimum-cost injective assignment (Kuhn-Munkres with potentials).
/// Throws InputError on ragged rows or non-finite entries.
Assignment hungarian_match(const CostMatrix& cost);

}  // namespace slotbench::eval
