#pragma once

#include <cstddef>
#include <vector>

#include "prism/backend.hpp"
#include "prism/core.hpp"
#include "prism/prompt_plan.hpp"

namespace prism {

inline constexpr std::size_t kMinStepBudget = 8;
inline constexpr std::size_t kMaxDerivedStepBudget = 64;

struct BudgetPlan {
  std::size_t per_step_budget = kMaxDerivedStepBudget;
  BudgetMode mode = BudgetMode::context_derived;
  double context_margin = 0.9;
};

// context_derived: clamp(floor(margin * context_limit / N), 8, 64).
BudgetPlan make_budget_plan(const DiagnosisConfig& config, std::size_t context_limit,
                            std::size_t step_count);

// Filtering system text, the user query, then every step as header plus a
// budget-truncated body, each cut body followed by an omission marker. When
// the prompt does not fit it is rebuilt once at the minimum budget.
PromptPlan build_filtering_prompt(const Trace& trace, const BudgetPlan& budget,
                                  const SignalBackend& backend);

// Diagnosis system text, the user query, then every step in order: steps in
// symptoms or candidates in full, all others as a short prefix plus marker.
// The note goes immediately before the earliest symptom step.
PromptPlan build_diagnosis_prompt(const Trace& trace, const std::vector<std::size_t>& symptoms,
                                  const std::vector<std::size_t>& candidates,
                                  const DiagnosisConfig& config, const SignalBackend& backend);

// Untruncated trace with the user query and no instructions.
PromptPlan build_raw_prompt(const Trace& trace);

}  // namespace prism
