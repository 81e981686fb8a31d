#pragma once

// Token-to-step aggregation kernels. Each kernel has a plain serial reference
// and an OpenMP version; the OpenMP version reduces in a fixed token order so
// its output does not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "prism/backend.hpp"

namespace prism::kernels {

enum class Exec { serial, parallel };

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;
inline constexpr char kPairSeparator = '\x1F';

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset);

// fnv1a64(a ++ 0x1F ++ b)
std::uint64_t fnv1a64_pair(std::string_view a, std::string_view b);

// Surrogate token NLL: 1.5 for the first token, otherwise
// 1 + (fnv1a64(prev ++ 0x1F ++ tok) mod 1000) / 1000.
std::vector<double> surrogate_token_nll(std::span<const std::string_view> tokens);

// Surrogate raw attention weight from token i to token j <= i before row
// normalization.
double surrogate_raw_attention(std::string_view token_i, std::string_view token_j,
                               std::size_t i, std::size_t j);

// Step attention over the surrogate attention field: rows are normalized over all
// j <= i, then A[a][b] = (1/|T_a|) * sum over t_a in T_a, t_b in T_b.
// token_step[t] < 0 marks context-only tokens.
StepAttention surrogate_step_attention(std::span<const std::string_view> tokens,
                                       std::span<const long> token_step,
                                       std::size_t step_count, Exec exec);

// Step attention from an explicit token-level attention matrix. Row t may be ragged
// (length t + 1) or full; entries with column > t are ignored.
StepAttention step_attention_from_tokens(const std::vector<std::vector<double>>& alpha,
                                         std::span<const long> token_step,
                                         std::size_t step_count, Exec exec);

// Per-step token counts and mean of token values.
struct StepMeans {
  std::vector<double> mean;
  std::vector<std::size_t> count;
};

StepMeans step_means(std::span<const double> token_values, std::span<const long> token_step,
                     std::size_t step_count);

int max_threads();

}  // namespace prism::kernels
