#pragma once

#include <string>
#include <vector>

namespace slotbench::eval {

enum class CorrelationKind { kSpearman, kPearson };

std::string correlation_name(CorrelationKind kind);

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Needs equal lengths >= 3 (InputError); zero variance raises UndefinedResultError.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Pearson on average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
double rank_correlation(const std::vector<double>& x, const std::vector<double>& y, CorrelationKind kind);

}  // namespace slotbench::eval
