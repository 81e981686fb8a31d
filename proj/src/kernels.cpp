#include "prism/kernels.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prism::kernels {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

std::uint64_t fnv1a64_pair(std::string_view a, std::string_view b) {
  const std::uint64_t mid = fnv1a64(std::string_view(&kPairSeparator, 1), fnv1a64(a));
  return fnv1a64(b, mid);
}

std::vector<double> surrogate_token_nll(std::span<const std::string_view> tokens) {
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    out[t] = t == 0 ? 1.5
                    : 1.0 + static_cast<double>(fnv1a64_pair(tokens[t - 1], tokens[t]) % 1000) / 1000.0;
  }
  return out;
}

double surrogate_raw_attention(std::string_view token_i, std::string_view token_j,
                               std::size_t i, std::size_t j) {
  const double distance = 1.0 / static_cast<double>(i - j + 1);
  return distance * (1.0 + static_cast<double>(fnv1a64_pair(token_i, token_j) % 97) / 97.0);
}

namespace {

StepAttention zero_attention(std::size_t step_count) {
  StepAttention a(step_count);
  for (std::size_t i = 0; i < step_count; ++i) a[i].assign(i, 0.0);
  return a;
}

std::vector<std::size_t> count_tokens_per_step(std::span<const long> token_step,
                                               std::size_t step_count) {
  std::vector<std::size_t> counts(step_count, 0);
  for (long s : token_step) {
    if (s >= 0) {
      if (static_cast<std::size_t>(s) >= step_count)
        throw std::out_of_range("token assigned to step beyond step_count");
      ++counts[static_cast<std::size_t>(s)];
    }
  }
  return counts;
}

void divide_rows(StepAttention& a, const std::vector<std::size_t>& counts) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (counts[i] == 0) continue;
    for (double& v : a[i]) v /= static_cast<double>(counts[i]);
  }
}

// Reference: walk every token pair in order, no buffering.
StepAttention surrogate_serial(std::span<const std::string_view> tokens,
                               std::span<const long> token_step, std::size_t step_count) {
  StepAttention a = zero_attention(step_count);
  std::vector<double> row;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const long si = token_step[i];
    if (si <= 0) continue;
    row.assign(i + 1, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      row[j] = surrogate_raw_attention(tokens[i], tokens[j], i, j);
      total += row[j];
    }
    for (std::size_t j = 0; j < i; ++j) {
      const long sj = token_step[j];
      if (sj >= 0 && sj < si) a[static_cast<std::size_t>(si)][static_cast<std::size_t>(sj)] += row[j] / total;
    }
  }
  divide_rows(a, count_tokens_per_step(token_step, step_count));
  return a;
}

// Per-query-token partial sums computed in parallel, reduced serially in
// token order.
StepAttention surrogate_parallel(std::span<const std::string_view> tokens,
                                 std::span<const long> token_step, std::size_t step_count) {
  const std::size_t n = tokens.size();
  std::vector<std::vector<double>> partial(n);
  const long long nn = static_cast<long long>(n);

#pragma omp parallel for schedule(dynamic, 16)
  for (long long ii = 0; ii < nn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const long si = token_step[i];
    if (si <= 0) continue;
    const std::uint64_t prefix =
        fnv1a64(std::string_view(&kPairSeparator, 1), fnv1a64(tokens[i]));
    std::vector<double> weights(i + 1);
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const double distance = 1.0 / static_cast<double>(i - j + 1);
      const double w =
          distance * (1.0 + static_cast<double>(fnv1a64(tokens[j], prefix) % 97) / 97.0);
      weights[j] = w;
      total += w;
    }
    auto& acc = partial[i];
    acc.assign(static_cast<std::size_t>(si), 0.0);
    for (std::size_t j = 0; j < i; ++j) {
      const long sj = token_step[j];
      if (sj >= 0 && sj < si) acc[static_cast<std::size_t>(sj)] += weights[j] / total;
    }
  }

  StepAttention a = zero_attention(step_count);
  for (std::size_t i = 0; i < n; ++i) {
    const long si = token_step[i];
    if (si <= 0) continue;
    auto& row = a[static_cast<std::size_t>(si)];
    for (std::size_t j = 0; j < partial[i].size(); ++j) row[j] += partial[i][j];
  }
  divide_rows(a, count_tokens_per_step(token_step, step_count));
  return a;
}

StepAttention dense_serial(const std::vector<std::vector<double>>& alpha,
                           std::span<const long> token_step, std::size_t step_count) {
  StepAttention a = zero_attention(step_count);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const long si = token_step[i];
    if (si <= 0) continue;
    const auto& row = alpha[i];
    for (std::size_t j = 0; j < i && j < row.size(); ++j) {
      const long sj = token_step[j];
      if (sj >= 0 && sj < si) a[static_cast<std::size_t>(si)][static_cast<std::size_t>(sj)] += row[j];
    }
  }
  divide_rows(a, count_tokens_per_step(token_step, step_count));
  return a;
}

StepAttention dense_parallel(const std::vector<std::vector<double>>& alpha,
                             std::span<const long> token_step, std::size_t step_count) {
  const std::size_t n = alpha.size();
  std::vector<std::vector<double>> partial(n);
  const long long nn = static_cast<long long>(n);

#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < nn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const long si = token_step[i];
    if (si <= 0) continue;
    auto& acc = partial[i];
    acc.assign(static_cast<std::size_t>(si), 0.0);
    const auto& row = alpha[i];
    for (std::size_t j = 0; j < i && j < row.size(); ++j) {
      const long sj = token_step[j];
      if (sj >= 0 && sj < si) acc[static_cast<std::size_t>(sj)] += row[j];
    }
  }

  StepAttention a = zero_attention(step_count);
  for (std::size_t i = 0; i < n; ++i) {
    const long si = token_step[i];
    if (si <= 0) continue;
    auto& row = a[static_cast<std::size_t>(si)];
    for (std::size_t j = 0; j < partial[i].size(); ++j) row[j] += partial[i][j];
  }
  divide_rows(a, count_tokens_per_step(token_step, step_count));
  return a;
}

}  // namespace

StepAttention surrogate_step_attention(std::span<const std::string_view> tokens,
                                       std::span<const long> token_step,
                                       std::size_t step_count, Exec exec) {
  if (tokens.size() != token_step.size())
    throw std::invalid_argument("token/step length mismatch");
  return exec == Exec::serial ? surrogate_serial(tokens, token_step, step_count)
                              : surrogate_parallel(tokens, token_step, step_count);
}

StepAttention step_attention_from_tokens(const std::vector<std::vector<double>>& alpha,
                                         std::span<const long> token_step,
                                         std::size_t step_count, Exec exec) {
  if (alpha.size() != token_step.size())
    throw std::invalid_argument("attention rows must match token count");
  return exec == Exec::serial ? dense_serial(alpha, token_step, step_count)
                              : dense_parallel(alpha, token_step, step_count);
}

StepMeans step_means(std::span<const double> token_values, std::span<const long> token_step,
                     std::size_t step_count) {
  if (token_values.size() != token_step.size())
    throw std::invalid_argument("token/step length mismatch");
  StepMeans out;
  out.count = count_tokens_per_step(token_step, step_count);
  out.mean.assign(step_count, 0.0);
  for (std::size_t t = 0; t < token_values.size(); ++t) {
    if (token_step[t] >= 0) out.mean[static_cast<std::size_t>(token_step[t])] += token_values[t];
  }
  for (std::size_t s = 0; s < step_count; ++s) {
    if (out.count[s]) out.mean[s] /= static_cast<double>(out.count[s]);
  }
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace prism::kernels
