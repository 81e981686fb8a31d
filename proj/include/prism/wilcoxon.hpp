#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace prism::stats {

// Paired one-sided Wilcoxon signed-rank test, alternative "differences tend
// to be positive". Zero differences are dropped; tied magnitudes get average
// ranks.
struct WilcoxonResult {
  std::size_t n_used = 0;   // non-zero differences
  std::size_t n_zero = 0;   // dropped zeros
  double w_plus = 0.0;      // sum of ranks of positive differences
  double p_value = 1.0;     // P(W+ >= observed) under H0, in (0, 1]
  bool exact = true;
  bool degenerate = false;  // no non-zero differences
};

inline constexpr std::size_t kExactMaxN = 25;

// Exact null distribution for n_used <= exact_max_n, otherwise the normal
// approximation with continuity and tie corrections.
WilcoxonResult wilcoxon_greater(std::span<const double> deltas, std::size_t exact_max_n = kExactMaxN);

// Both routes, regardless of n.
double wilcoxon_exact_p_greater(std::span<const double> deltas);
double wilcoxon_normal_p_greater(std::span<const double> deltas);

// Ranks of |d| over the non-zero entries (average ranks for ties), in input
// order with zeros removed; signs returned alongside.
struct SignedRanks {
  std::vector<double> ranks;
  std::vector<int> signs;
};
SignedRanks signed_ranks(std::span<const double> deltas);

}  // namespace prism::stats
