#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/attribution.hpp"
#include "prism/backend.hpp"
#include "prism/core.hpp"

namespace prism {

struct TraceScore {
  std::string trace_id;
  bool hit = false;
  double score = 0.0;
  std::string note;
};

struct MetricResult {
  std::string metric_name;
  double value = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  std::vector<TraceScore> per_trace;
  std::vector<std::string> skipped;
};

// Share of traces whose top-ranked step equals root_cause_step. Traces
// without that annotation are skipped; an empty ranking is a miss.
MetricResult top1_accuracy(std::span<const AttributionReport> reports, std::span<const Trace> traces);

// Recall of gt_spans among the span ids of the first max_submissions
// distinct locations in the ranking. Throws Error(no_span_ids) when ranked
// entries carry no span ids.
MetricResult location_accuracy(const AttributionReport& report, const std::set<std::string>& gt_spans,
                               std::size_t max_submissions);

// Mean per-trace Loc. Acc. over span-annotated traces.
MetricResult mean_location_accuracy(std::span<const AttributionReport> reports, std::span<const Trace> traces,
                                    std::size_t max_submissions);

// Outcome of running one variant over a dataset. reports[i] is empty when
// trace i failed; failures[i] then holds the reason.
struct DatasetRun {
  std::vector<std::optional<AttributionReport>> reports;
  std::vector<std::string> failures;
  MetricResult metric;
};

// Top-1 when any trace carries a root-cause step, otherwise Loc. Acc.
// Failed traces count as misses. jobs > 1 runs traces concurrently; results
// keep input order.
DatasetRun run_ablation(std::span<const Trace> traces, const SignalBackend& backend,
                        const DiagnosisConfig& config, Variant variant, int jobs = 1);

struct RoutingStudy {
  MetricResult nll_topn;
  MetricResult attention_topn;
  std::vector<std::string> fallback_traces;  // ran on the filtering prompt
  std::size_t context_limit = 0;
};

// Hit rates of the annotated location within the top-n steps by NLL, and
// within the top-n earlier steps by attention received from the top-n
// highest-NLL steps.
RoutingStudy nll_routing_study(std::span<const Trace> traces, const SignalBackend& backend,
                               const DiagnosisConfig& config, std::size_t top_n = 5);

struct ValidityResult {
  std::string comparison_name;
  std::size_t n = 0;
  double mean_delta = 0.0;
  double median_delta = 0.0;
  double win_rate = 0.0;
  double p_value = 1.0;
  bool exact = true;
  bool degenerate = false;
  bool unreliable = false;  // fewer than kMinValidityPairs pairs
  std::vector<double> deltas;
  std::vector<std::pair<double, double>> ecdf_points;
};

inline constexpr std::size_t kMinValidityPairs = 5;

// Paired comparison of attention mass from symptoms onto the annotated
// source against its neighbor and against a seeded random earlier step.
std::vector<ValidityResult> attention_validity_study(std::span<const Trace> traces, const SignalBackend& backend,
                                                     const DiagnosisConfig& config, std::uint64_t seed);

// Summary of paired differences; ecdf_points left empty.
ValidityResult summarize_deltas(std::string name, std::vector<double> deltas);

// (value, share of samples <= value) at every distinct value.
std::vector<std::pair<double, double>> ecdf(std::vector<double> samples);

// splitmix64 stream; portable across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

nlohmann::ordered_json metric_to_json(const MetricResult& metric);
nlohmann::ordered_json validity_to_json(const ValidityResult& result);

}  // namespace prism
