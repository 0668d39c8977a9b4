#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include <torch/torch.h>

#include "slotbench/eval/hungarian.hpp"
#include "slotbench/nn/unet.hpp"

namespace oracle {

/// Foreground ARI by explicit pair counting over pixels with truth > 0.
/// Identical partitions score 1; degenerate denominators score 0.
inline double ari_pair_counting(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred) {
  std::vector<std::int64_t> t, p;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > 0) {
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
  }
  const std::size_t n = t.size();
  if (n < 2) return 0.0;
  double same_both = 0, same_t = 0, same_p = 0, diff_both = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool st = t[i] == t[j], sp = p[i] == p[j];
      if (st && sp) {
        same_both += 1;
      } else if (st) {
        same_t += 1;
      } else if (sp) {
        same_p += 1;
      } else {
        diff_both += 1;
      }
    }
  }
  if (same_t == 0 && same_p == 0) return 1.0;  // same partition
  const double num = 2.0 * (diff_both * same_both - same_t * same_p);
  const double den = (diff_both + same_t) * (same_t + same_both) + (diff_both + same_p) * (same_p + same_both);
  return den == 0 ? 0.0 : num / den;
}

/// Foreground ARI from a dense contingency table and the closed-form expectation.
inline double ari_dense_table(const std::vector<std::int64_t>& truth, const std::vector<std::int64_t>& pred,
                              int max_label) {
  const int L = max_label + 1;
  std::vector<double> table(static_cast<std::size_t>(L) * L, 0.0), a(L, 0.0), b(L, 0.0);
  double n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] <= 0) continue;
    table[truth[i] * L + pred[i]] += 1;
    a[truth[i]] += 1;
    b[pred[i]] += 1;
    n += 1;
  }
  if (n < 2) return 0.0;
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (double v : table) index += c2(v);
  for (double v : a) sa += c2(v);
  for (double v : b) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double maximum = 0.5 * (sa + sb);
  if (index == sa && index == sb) return 1.0;
  if (maximum - expected == 0) return 0.0;
  return (index - expected) / (maximum - expected);
}

/// Minimum assignment cost by trying every permutation of the longer side.
inline double brute_force_assignment(slotbench::eval::CostMatrix cost) {
  if (cost.empty() || cost.front().empty()) return 0.0;
  if (cost.size() > cost.front().size()) {
    slotbench::eval::CostMatrix t(cost.front().size(), std::vector<double>(cost.size()));
    for (std::size_t i = 0; i < cost.size(); ++i) {
      for (std::size_t j = 0; j < cost[i].size(); ++j) t[j][i] = cost[i][j];
    }
    cost = t;
  }
  const std::size_t n = cost.size(), m = cost.front().size();
  std::vector<int> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i][cols[i]];
    best = std::min(best, c);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

/// Stick-breaking recursion in probability space: m_k = s_k * a_k, s_{k+1} = s_k * (1 - a_k),
/// last mask = remaining scope. The attention net sees log(s_k) as its fourth channel.
inline torch::Tensor plain_stick_breaking(slotbench::nn::UNet& unet, const torch::Tensor& images, int slots) {
  auto scope = torch::ones({images.size(0), 1, images.size(2), images.size(3)}, images.options());
  std::vector<torch::Tensor> masks;
  for (int k = 0; k < slots - 1; ++k) {
    auto alpha = torch::sigmoid(unet->forward(torch::cat({images, torch::log(scope)}, 1)));
    masks.push_back(scope * alpha);
    scope = scope * (1 - alpha);
  }
  masks.push_back(scope);
  return torch::cat(masks, 1);
}

/// Central finite difference of `f` with respect to one scalar of `param`.
template <typename F>
double central_difference(torch::Tensor& param, std::int64_t flat_index, double step, F&& f) {
  torch::NoGradGuard guard;
  auto flat = param.view({-1});
  const double original = flat[flat_index].item<double>();
  flat[flat_index].fill_(original + step);
  const double up = f();
  flat[flat_index].fill_(original - step);
  const double down = f();
  flat[flat_index].fill_(original);
  return (up - down) / (2 * step);
}

}  // namespace oracle
