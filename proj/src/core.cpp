#include "prism/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace prism {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_document: return "malformed-document";
    case ErrorCode::label_out_of_range: return "label-out-of-range";
    case ErrorCode::missing_span_id: return "missing-span-id";
    case ErrorCode::context_overflow: return "context-overflow";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::no_span_ids: return "no-span-ids";
    case ErrorCode::missing_annotation: return "missing-annotation";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::input: return "input";
  }
  return "unknown";
}

std::string_view to_string(SourceFormat format) {
  switch (format) {
    case SourceFormat::whowhen: return "whowhen";
    case SourceFormat::openinference: return "openinference";
    case SourceFormat::synthetic: return "synthetic";
  }
  return "synthetic";
}

SourceFormat source_format_from_string(std::string_view name) {
  if (name == "whowhen") return SourceFormat::whowhen;
  if (name == "openinference") return SourceFormat::openinference;
  if (name == "synthetic") return SourceFormat::synthetic;
  throw Error(ErrorCode::malformed_document,
              "unknown source format '" + std::string(name) + "'");
}

std::vector<std::size_t> ground_truth_steps(const Trace& trace) {
  std::vector<std::size_t> out;
  if (!trace.annotations) return out;
  const auto& ann = *trace.annotations;
  if (ann.root_cause_step && *ann.root_cause_step < trace.size()) {
    out.push_back(*ann.root_cause_step);
  }
  if (ann.error_spans) {
    for (const auto& step : trace.steps) {
      if (step.span_id && ann.error_spans->count(*step.span_id) &&
          std::find(out.begin(), out.end(), step.index) == out.end()) {
        out.push_back(step.index);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

DiagnosisConfig DiagnosisConfig::whowhen_preset() {
  DiagnosisConfig c;
  c.symptom_ratio = 0.2;
  return c;
}

DiagnosisConfig DiagnosisConfig::trail_preset() {
  DiagnosisConfig c;
  c.symptom_ratio = 0.5;
  return c;
}

void check_config(const DiagnosisConfig& c) {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::configuration, msg);
  };
  if (!(c.symptom_ratio > 0.0 && c.symptom_ratio <= 1.0))
    fail("symptom_ratio must lie in (0, 1]");
  if (c.candidate_k == 0) fail("candidate_k must be positive");
  if (!(c.consensus_lambda >= 0.0) || !std::isfinite(c.consensus_lambda))
    fail("consensus_lambda must be non-negative");
  if (c.filtering_budget_tokens == 0) fail("filtering budget must be positive");
  if (!(c.context_margin > 0.0 && c.context_margin <= 1.0))
    fail("context_margin must lie in (0, 1]");
  if (c.compressed_prefix_tokens == 0)
    fail("compressed_prefix_tokens must be positive");
  if (c.restoration_cap_tokens == 0)
    fail("restoration_cap_tokens must be positive");
  if (!(c.layer_fraction > 0.0 && c.layer_fraction <= 1.0))
    fail("layer_fraction must lie in (0, 1]");
  if (c.top_m_for_consensus == 0) fail("top_m_for_consensus must be positive");
  if (c.max_submissions == 0) fail("max_submissions must be positive");
  for (const auto& kw : c.failure_keywords) {
    if (kw.empty()) fail("failure keywords must be non-empty");
    if (std::any_of(kw.begin(), kw.end(),
                    [](unsigned char ch) { return ch >= 'A' && ch <= 'Z'; }))
      fail("failure keywords must be lowercase: " + kw);
  }
}

std::vector<std::string> validate_trace(const Trace& trace) {
  std::vector<std::string> violations;
  const std::size_t n = trace.size();
  if (n == 0) violations.emplace_back("steps: trace has no steps");

  std::map<std::size_t, std::size_t> seen;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto idx = trace.steps[pos].index;
    if (++seen[idx] == 2) {
      violations.push_back("steps[" + std::to_string(pos) +
                           "]: duplicate step index " + std::to_string(idx));
    } else if (idx != pos) {
      violations.push_back("steps[" + std::to_string(pos) + "]: index " +
                           std::to_string(idx) + " breaks the 0.." +
                           std::to_string(n == 0 ? 0 : n - 1) + " sequence");
    }
  }

  if (trace.annotations) {
    const auto& ann = *trace.annotations;
    if (!ann.root_cause_step && !ann.error_spans) {
      violations.emplace_back(
          "annotations: neither root_cause_step nor error_spans present");
    }
    if (ann.root_cause_step && *ann.root_cause_step >= n) {
      violations.push_back("annotations.root_cause_step: " +
                           std::to_string(*ann.root_cause_step) +
                           " outside [0, " + std::to_string(n) + ")");
    }
    if (ann.error_spans) {
      std::set<std::string> known;
      for (const auto& s : trace.steps)
        if (s.span_id) known.insert(*s.span_id);
      for (const auto& span : *ann.error_spans) {
        if (!known.count(span))
          violations.push_back("annotations.error_spans: unknown span_id '" +
                               span + "'");
      }
    }
  }
  return violations;
}

}  // namespace prism
