#include "prism/prompt_builder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "prism/ingest.hpp"
#include "prism/prompt_text.hpp"

namespace prism {

namespace {

Segment system_segment(std::string_view text) {
  return Segment{SegmentKind::system, std::nullopt, std::string(text), 0};
}

void append_header(PromptPlan& plan, std::string_view system, const Trace& trace) {
  plan.trace_id = trace.trace_id;
  if (!system.empty()) plan.segments.push_back(system_segment(system));
  if (!trace.query.empty())
    plan.segments.push_back(system_segment(std::string(prompt_text::kQueryPrefix) + trace.query));
}

// Appends the step_text segment and, when the body was cut, a marker.
void append_step(PromptPlan& plan, const Step& step, std::string_view body, bool truncated) {
  const RenderedStep r = render_step(step);
  Segment seg;
  seg.kind = SegmentKind::step_text;
  seg.step_index = step.index;
  seg.text = r.header + "\n";
  seg.body_offset = seg.text.size();
  seg.text += body;
  plan.segments.push_back(std::move(seg));
  if (truncated)
    plan.segments.push_back(Segment{SegmentKind::omission_marker, std::nullopt,
                                    std::string(kOmissionMarker), 0});
}

PromptPlan filtering_plan(const Trace& trace, std::size_t budget, const SignalBackend& backend) {
  PromptPlan plan;
  plan.stage = PromptStage::filtering;
  plan.step_count = trace.size();
  plan.per_step_budget = budget;
  append_header(plan, prompt_text::kFilteringSystem, trace);
  for (const auto& step : trace.steps) {
    const Truncation cut = backend.truncate_to_budget(step.content, budget);
    append_step(plan, step, cut.prefix, cut.truncated);
  }
  return plan;
}

PromptPlan diagnosis_plan(const Trace& trace, const std::set<std::size_t>& restore,
                          std::size_t min_symptom, const DiagnosisConfig& config,
                          const SignalBackend& backend, bool cap_restored) {
  PromptPlan plan;
  plan.stage = PromptStage::diagnosis;
  plan.step_count = trace.size();
  plan.per_step_budget = config.compressed_prefix_tokens;
  plan.restoration_capped = cap_restored;
  append_header(plan, prompt_text::kDiagnosisSystem, trace);
  for (const auto& step : trace.steps) {
    if (step.index == min_symptom)
      plan.segments.push_back(Segment{SegmentKind::note, std::nullopt,
                                      std::string(prompt_text::kDiagnosisNote), 0});
    if (restore.count(step.index)) {
      if (cap_restored) {
        const Truncation cut = backend.truncate_to_budget(step.content, config.restoration_cap_tokens);
        append_step(plan, step, cut.prefix, cut.truncated);
      } else {
        append_step(plan, step, step.content, false);
      }
    } else {
      const Truncation cut = backend.truncate_to_budget(step.content, config.compressed_prefix_tokens);
      append_step(plan, step, cut.prefix, cut.truncated);
    }
  }
  return plan;
}

}  // namespace

BudgetPlan make_budget_plan(const DiagnosisConfig& config, std::size_t context_limit,
                            std::size_t step_count) {
  BudgetPlan plan;
  plan.mode = config.filtering_budget_mode;
  plan.context_margin = config.context_margin;
  if (config.filtering_budget_mode == BudgetMode::fixed) {
    plan.per_step_budget = config.filtering_budget_tokens;
    return plan;
  }
  const double share = std::floor(config.context_margin * static_cast<double>(context_limit) /
                                  static_cast<double>(std::max<std::size_t>(step_count, 1)));
  plan.per_step_budget = static_cast<std::size_t>(
      std::clamp(share, static_cast<double>(kMinStepBudget), static_cast<double>(kMaxDerivedStepBudget)));
  return plan;
}

PromptPlan build_filtering_prompt(const Trace& trace, const BudgetPlan& budget,
                                  const SignalBackend& backend) {
  const std::size_t limit = backend.capabilities(0.2).context_limit;
  PromptPlan plan = filtering_plan(trace, std::max<std::size_t>(budget.per_step_budget, 1), backend);
  std::size_t need = backend.count_tokens(plan.text());
  if (need <= limit) return plan;
  if (budget.per_step_budget > kMinStepBudget) {
    plan = filtering_plan(trace, kMinStepBudget, backend);
    need = backend.count_tokens(plan.text());
    if (need <= limit) return plan;
  }
  throw Error(ErrorCode::context_overflow,
              "filtering prompt needs " + std::to_string(need) + " tokens at the minimum step budget; " +
                  std::to_string(limit) + " available");
}

PromptPlan build_diagnosis_prompt(const Trace& trace, const std::vector<std::size_t>& symptoms,
                                  const std::vector<std::size_t>& candidates,
                                  const DiagnosisConfig& config, const SignalBackend& backend) {
  if (symptoms.empty()) throw std::invalid_argument("diagnosis prompt needs at least one symptom");
  std::set<std::size_t> restore;
  for (auto m : symptoms) {
    if (m >= trace.size()) throw std::out_of_range("symptom index beyond trace");
    restore.insert(m);
  }
  for (auto c : candidates) {
    if (c >= trace.size()) throw std::out_of_range("candidate index beyond trace");
    restore.insert(c);
  }
  const std::size_t first = *std::min_element(symptoms.begin(), symptoms.end());
  const std::size_t limit = backend.capabilities(config.layer_fraction).context_limit;

  PromptPlan plan = diagnosis_plan(trace, restore, first, config, backend, false);
  std::size_t need = backend.count_tokens(plan.text());
  if (need <= limit) return plan;
  plan = diagnosis_plan(trace, restore, first, config, backend, true);
  need = backend.count_tokens(plan.text());
  if (need <= limit) return plan;
  throw Error(ErrorCode::context_overflow,
              "diagnosis prompt needs " + std::to_string(need) + " tokens after capping restored steps; " +
                  std::to_string(limit) + " available");
}

PromptPlan build_raw_prompt(const Trace& trace) {
  PromptPlan plan;
  plan.stage = PromptStage::raw;
  plan.step_count = trace.size();
  append_header(plan, {}, trace);
  for (const auto& step : trace.steps) append_step(plan, step, step.content, false);
  return plan;
}

}  // namespace prism
