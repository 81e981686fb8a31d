#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/backend.hpp"
#include "prism/core.hpp"
#include "prism/prompt_plan.hpp"

namespace prism {

struct SymptomSet {
  std::vector<std::size_t> members;  // rank order
  std::vector<double> scores;        // step NLL of each member
  std::vector<bool> keyword_flags;
};

struct CandidateSet {
  std::vector<std::size_t> members;
  std::vector<double> h_scores;  // non-increasing
  bool no_earlier_steps = false;
};

// Per-symptom scores s(k|m) and the fused ranking built from them.
struct ScoreTable {
  // s[m][k] for k < m; only symptoms m >= 1 appear.
  std::map<std::size_t, std::vector<double>> s;
  // Mean attention from m to its earlier steps.
  std::map<std::size_t, double> mean_attention;
  std::map<std::size_t, double> fuse;
  std::map<std::size_t, std::set<std::size_t>> consensus;
  std::map<std::size_t, double> final_score;
};

struct SymptomLink {
  std::size_t symptom_step = 0;
  double s_value = 0.0;
};

struct RankedEntry {
  std::size_t step_index = 0;
  std::optional<std::string> span_id;
  std::string agent;
  double final_score = 0.0;
  double fuse_score = 0.0;
  std::size_t consensus_count = 0;
  std::vector<SymptomLink> linked_symptoms;
  bool submitted = false;
};

enum class Variant { full, no_filtering, no_diagnosis, no_restoration };

std::string_view to_string(Variant variant);
Variant variant_from_string(std::string_view name);

struct PassStats {
  std::size_t tokens_pass1 = 0;
  std::size_t tokens_pass2 = 0;
};

struct AttributionReport {
  std::string trace_id;
  Variant variant = Variant::full;
  std::string backend;
  std::vector<RankedEntry> ranked;
  SymptomSet symptoms_stage1;
  std::optional<CandidateSet> candidates_stage1;
  std::optional<SymptomSet> symptoms_stage2;
  DiagnosisConfig config;
  PassStats pass_stats;
  // Recorded conditions such as "no_earlier_steps" or "restoration_capped".
  std::vector<std::string> conditions;
};

// max(1, ceil(ratio * N)), never more than N.
std::size_t symptom_count(double ratio, std::size_t step_count);

bool contains_keyword(std::string_view text, const std::vector<std::string>& keywords);

// Ranks steps by (keyword hit desc, NLL desc, index asc) and keeps the top
// symptom_count(ratio, N).
SymptomSet identify_symptoms(const std::vector<double>& step_nll,
                             const std::vector<std::string>& step_texts, double ratio,
                             const std::vector<std::string>& keywords);

// Candidate filter: H_k = sum over m in M with k < m of A[m][k], for
// k < max(M) and k not a symptom. Top-K by H_k, ties to the smaller index. Pass
// candidate_k = N to rank every eligible step.
CandidateSet select_candidates(const StepAttention& attention, const std::vector<std::size_t>& symptoms,
                               std::size_t candidate_k);

// s(k|m) = (A[m][k] / mean_j A[m][j]) * (1 + max(0, NLL_m - NLL_k)) for
// every symptom m >= 1 and every k < m. A symptom whose mean attention is
// zero scores all its earlier steps 0.
ScoreTable score_candidates(const StepAttention& attention, const std::vector<double>& step_nll,
                            const std::vector<std::size_t>& symptoms);

// Score(k) = Fuse(k) * (1 + lambda * |V_k|) with Fuse(k) = sum_m s(k|m).
// Fills fuse, consensus and final_score, and returns every step that is
// earlier than some scoring symptom, ordered by final score desc then index
// asc. Zero-attention symptoms take no part in the consensus.
std::vector<RankedEntry> fuse_and_rank(ScoreTable& table, double lambda, std::size_t top_m);

// Bodies of the step_text segments as they appear in the prompt, in step
// order.
std::vector<std::string> visible_step_bodies(const PromptPlan& plan);

struct PassRecord {
  PromptPlan plan;
  PrefillSignals signals;
  SymptomSet symptoms;
  std::optional<CandidateSet> candidates;
};

struct PipelineRun {
  AttributionReport report;
  std::optional<PassRecord> pass1;
  std::optional<PassRecord> pass2;
  ScoreTable scores;
};

// Both prefill passes (or the reduced flow of an ablation variant). Errors
// keep their code and gain the failing stage in the message.
PipelineRun run_pipeline(const Trace& trace, const DiagnosisConfig& config,
                         const SignalBackend& backend, Variant variant = Variant::full);

nlohmann::ordered_json config_to_json(const DiagnosisConfig& config);
nlohmann::ordered_json symptoms_to_json(const SymptomSet& symptoms);
nlohmann::ordered_json candidates_to_json(const CandidateSet& candidates);
nlohmann::ordered_json report_to_json(const AttributionReport& report);

}  // namespace prism
