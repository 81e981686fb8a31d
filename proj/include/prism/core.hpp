#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prism {

inline constexpr std::string_view kToolVersion = "0.3.1";

enum class ErrorCode {
  malformed_document,
  label_out_of_range,
  missing_span_id,
  context_overflow,
  backend_unavailable,
  shape_mismatch,
  no_span_ids,
  missing_annotation,
  configuration,
  input,
};

std::string_view to_string(ErrorCode code);

// Every failure the engine reports carries a machine-readable code; the CLI
// maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class SourceFormat { whowhen, openinference, synthetic };

std::string_view to_string(SourceFormat format);
SourceFormat source_format_from_string(std::string_view name);

struct Step {
  std::size_t index = 0;
  std::string agent;
  std::string role;
  std::string content;
  std::optional<std::string> span_id;
  // Set when an attribute payload was hard-capped during ingest.
  bool payload_capped = false;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Annotations {
  std::optional<std::size_t> root_cause_step;
  std::optional<std::set<std::string>> error_spans;
  std::optional<std::string> root_cause_agent;

  friend bool operator==(const Annotations&, const Annotations&) = default;
};

struct Trace {
  std::string trace_id;
  std::string query;
  std::vector<Step> steps;
  std::optional<Annotations> annotations;
  SourceFormat source_format = SourceFormat::synthetic;

  std::size_t size() const noexcept { return steps.size(); }

  friend bool operator==(const Trace&, const Trace&) = default;
};

// Step indices of the annotated failure locations, whichever view the
// annotations carry. Span annotations are mapped through step span ids.
std::vector<std::size_t> ground_truth_steps(const Trace& trace);

enum class BudgetMode { fixed, context_derived };

struct DiagnosisConfig {
  double symptom_ratio = 0.2;
  std::size_t candidate_k = 5;
  double consensus_lambda = 0.3;
  BudgetMode filtering_budget_mode = BudgetMode::context_derived;
  std::size_t filtering_budget_tokens = 64;
  double context_margin = 0.9;
  std::size_t compressed_prefix_tokens = 16;
  std::size_t restoration_cap_tokens = 512;
  double layer_fraction = 0.2;
  std::vector<std::string> failure_keywords = {
      "error", "exception", "fail", "failed", "traceback", "invalid", "timeout"};
  std::size_t top_m_for_consensus = 5;
  std::size_t max_submissions = 10;
  std::uint64_t seed = 42;

  static DiagnosisConfig whowhen_preset();
  static DiagnosisConfig trail_preset();
};

// Throws Error(configuration) when a field is outside its allowed range.
void check_config(const DiagnosisConfig& config);

// Empty iff the trace satisfies every structural invariant.
std::vector<std::string> validate_trace(const Trace& trace);

}  // namespace prism
