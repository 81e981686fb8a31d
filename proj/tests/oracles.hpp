#pragma once

// Straightforward reimplementations used as test oracles. None of these call
// into the engine's scoring code; they trade speed for directness.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/backend.hpp"
#include "prism/prompt_plan.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

struct Ranked {
  std::size_t step = 0;
  double score = 0.0;
  double fuse = 0.0;
  std::size_t votes = 0;
};

// Symptom indices: keyword-flagged steps first, then by NLL desc, index asc.
std::vector<std::size_t> symptoms(const std::vector<double>& nll, const std::vector<bool>& flagged,
                                  std::size_t count);

// Integer ceil(num * n / den), at least 1.
std::size_t symptom_count(std::size_t num, std::size_t den, std::size_t n);

bool has_keyword(const std::string& text, const std::vector<std::string>& keywords);

// Attention-received filter over earlier non-symptom steps, top k.
std::vector<std::size_t> candidates(const Matrix& a, const std::vector<std::size_t>& symptoms, std::size_t k);

double s_value(const Matrix& a, const std::vector<double>& nll, std::size_t m, std::size_t k);

// Full fused ranking over steps before the last scoring symptom.
std::vector<Ranked> rank(const Matrix& a, const std::vector<double>& nll, const std::vector<std::size_t>& symptoms,
                         double lambda, std::size_t top_m);

// Step-to-step attention by direct quadruple summation.
Matrix aggregate(const Matrix& alpha, const std::vector<long>& owner, std::size_t steps);

// Surrogate backend rebuilt from its definition.
prism::PrefillSignals surrogate_prefill(const prism::PromptPlan& plan);

// P(W+ >= observed) by enumerating every sign pattern.
double wilcoxon_enumerated(const std::vector<double>& deltas);

std::uint64_t splitmix(std::uint64_t& state);

}  // namespace oracle
