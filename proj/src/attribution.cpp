#include "prism/attribution.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "prism/prompt_builder.hpp"

namespace prism {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_filtering: return "no_filtering";
    case Variant::no_diagnosis: return "no_diagnosis";
    case Variant::no_restoration: return "no_restoration";
  }
  return "full";
}

Variant variant_from_string(std::string_view name) {
  if (name == "full") return Variant::full;
  if (name == "no_filtering") return Variant::no_filtering;
  if (name == "no_diagnosis") return Variant::no_diagnosis;
  if (name == "no_restoration") return Variant::no_restoration;
  throw Error(ErrorCode::configuration, "unknown variant '" + std::string(name) + "'");
}

std::size_t symptom_count(double ratio, std::size_t step_count) {
  if (step_count == 0) return 0;
  // 0.2 * 15 is 3.0000000000000004 in binary floating point.
  const double want = std::ceil(ratio * static_cast<double>(step_count) - 1e-9);
  const auto n = static_cast<std::size_t>(std::max(1.0, want));
  return std::min(n, step_count);
}

bool contains_keyword(std::string_view text, const std::vector<std::string>& keywords) {
  if (keywords.empty()) return false;
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(keywords.begin(), keywords.end(), [&](const std::string& kw) {
    return !kw.empty() && lower.find(kw) != std::string::npos;
  });
}

SymptomSet identify_symptoms(const std::vector<double>& step_nll,
                             const std::vector<std::string>& step_texts, double ratio,
                             const std::vector<std::string>& keywords) {
  const std::size_t n = step_nll.size();
  if (n == 0) throw std::invalid_argument("identify_symptoms needs at least one step");
  if (step_texts.size() != n) throw std::invalid_argument("step text count differs from NLL length");

  std::vector<bool> flag(n);
  for (std::size_t i = 0; i < n; ++i) flag[i] = contains_keyword(step_texts[i], keywords);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (flag[a] != flag[b]) return static_cast<bool>(flag[a]);
    if (step_nll[a] != step_nll[b]) return step_nll[a] > step_nll[b];
    return a < b;
  });
  order.resize(symptom_count(ratio, n));

  SymptomSet out;
  out.members = order;
  for (auto m : order) {
    out.scores.push_back(step_nll[m]);
    out.keyword_flags.push_back(flag[m]);
  }
  return out;
}

CandidateSet select_candidates(const StepAttention& attention, const std::vector<std::size_t>& symptoms,
                               std::size_t candidate_k) {
  if (symptoms.empty()) throw std::invalid_argument("select_candidates needs symptoms");
  CandidateSet out;
  const std::size_t last = *std::max_element(symptoms.begin(), symptoms.end());
  const std::set<std::size_t> symptom_set(symptoms.begin(), symptoms.end());

  std::vector<std::pair<std::size_t, double>> scored;
  for (std::size_t k = 0; k < last; ++k) {
    if (symptom_set.count(k)) continue;
    double h = 0.0;
    for (auto m : symptoms) {
      if (k < m) h += attention.at(m).at(k);
    }
    scored.emplace_back(k, h);
  }
  if (scored.empty()) {
    out.no_earlier_steps = true;
    return out;
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (scored.size() > candidate_k) scored.resize(candidate_k);
  for (const auto& [k, h] : scored) {
    out.members.push_back(k);
    out.h_scores.push_back(h);
  }
  return out;
}

ScoreTable score_candidates(const StepAttention& attention, const std::vector<double>& step_nll,
                            const std::vector<std::size_t>& symptoms) {
  ScoreTable table;
  for (auto m : symptoms) {
    if (m == 0 || table.s.count(m)) continue;
    const auto& row = attention.at(m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) total += row.at(k);
    const double mean = total / static_cast<double>(m);
    table.mean_attention[m] = mean;
    std::vector<double> s(m, 0.0);
    if (mean > 0.0) {
      for (std::size_t k = 0; k < m; ++k) {
        const double contrast = 1.0 + std::max(0.0, step_nll.at(m) - step_nll.at(k));
        s[k] = (row[k] / mean) * contrast;
      }
    }
    table.s[m] = std::move(s);
  }
  return table;
}

std::vector<RankedEntry> fuse_and_rank(ScoreTable& table, double lambda, std::size_t top_m) {
  table.fuse.clear();
  table.consensus.clear();
  table.final_score.clear();
  if (table.s.empty()) return {};
  const std::size_t horizon = table.s.rbegin()->first;

  for (std::size_t k = 0; k < horizon; ++k) {
    table.fuse[k] = 0.0;
    table.consensus[k];
  }
  for (const auto& [m, row] : table.s) {
    for (std::size_t k = 0; k < m; ++k) table.fuse[k] += row[k];
    if (!(table.mean_attention[m] > 0.0)) continue;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t r = 0; r < order.size() && r < top_m; ++r) table.consensus[order[r]].insert(m);
  }

  std::vector<RankedEntry> ranked;
  for (std::size_t k = 0; k < horizon; ++k) {
    const double fuse = table.fuse[k];
    const auto& votes = table.consensus[k];
    const double score = fuse * (1.0 + lambda * static_cast<double>(votes.size()));
    table.final_score[k] = score;
    RankedEntry e;
    e.step_index = k;
    e.final_score = score;
    e.fuse_score = fuse;
    e.consensus_count = votes.size();
    for (auto m : votes) e.linked_symptoms.push_back({m, table.s.at(m)[k]});
    ranked.push_back(std::move(e));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.final_score > b.final_score;
  });
  return ranked;
}

std::vector<std::string> visible_step_bodies(const PromptPlan& plan) {
  std::vector<std::string> out(plan.step_count);
  for (const auto& seg : plan.segments) {
    if (seg.kind == SegmentKind::step_text && seg.step_index && *seg.step_index < plan.step_count)
      out[*seg.step_index] = std::string(seg.body());
  }
  return out;
}

namespace {

template <typename F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(stage) + ": " + e.what());
  }
}

PassRecord run_pass(const PromptPlan& plan, const DiagnosisConfig& config, const SignalBackend& backend,
                    const char* stage) {
  PassRecord pass;
  pass.plan = plan;
  pass.signals = in_stage(stage, [&] { return backend.prefill(plan, config.layer_fraction); });
  if (auto problems = check_signals(pass.signals); !problems.empty())
    throw Error(ErrorCode::backend_unavailable, std::string(stage) + ": " + problems.front());
  if (pass.signals.step_count() != plan.step_count)
    throw Error(ErrorCode::shape_mismatch, std::string(stage) + ": signal step count differs from plan");
  pass.symptoms = identify_symptoms(pass.signals.step_nll, visible_step_bodies(plan), config.symptom_ratio,
                                    config.failure_keywords);
  return pass;
}

void finish_ranking(AttributionReport& report, const Trace& trace, const DiagnosisConfig& config) {
  for (std::size_t r = 0; r < report.ranked.size(); ++r) {
    auto& e = report.ranked[r];
    e.span_id = trace.steps[e.step_index].span_id;
    e.agent = trace.steps[e.step_index].agent;
    e.submitted = r < config.max_submissions;
  }
  if (report.ranked.empty()) report.conditions.emplace_back("no_earlier_steps");
}

}  // namespace

PipelineRun run_pipeline(const Trace& trace, const DiagnosisConfig& config, const SignalBackend& backend,
                         Variant variant) {
  check_config(config);
  if (auto violations = validate_trace(trace); !violations.empty())
    throw Error(ErrorCode::input, "trace " + trace.trace_id + ": " + violations.front());

  PipelineRun run;
  AttributionReport& report = run.report;
  report.trace_id = trace.trace_id;
  report.variant = variant;
  report.backend = backend.name();
  report.config = config;

  if (variant == Variant::no_filtering) {
    PassRecord pass = run_pass(build_raw_prompt(trace), config, backend, "raw pass");
    report.symptoms_stage1 = pass.symptoms;
    report.pass_stats.tokens_pass1 = pass.signals.prompt_token_total;
    run.scores = score_candidates(pass.signals.step_attention, pass.signals.step_nll, pass.symptoms.members);
    report.ranked = fuse_and_rank(run.scores, config.consensus_lambda, config.top_m_for_consensus);
    run.pass1 = std::move(pass);
    finish_ranking(report, trace, config);
    return run;
  }

  const auto caps = in_stage("filtering", [&] { return backend.capabilities(config.layer_fraction); });
  const BudgetPlan budget = make_budget_plan(config, caps.context_limit, trace.size());
  PromptPlan filtering = in_stage("filtering", [&] { return build_filtering_prompt(trace, budget, backend); });
  if (filtering.per_step_budget != budget.per_step_budget) report.conditions.emplace_back("budget_fallback");

  PassRecord pass1 = run_pass(filtering, config, backend, "filtering");
  pass1.candidates = select_candidates(pass1.signals.step_attention, pass1.symptoms.members, config.candidate_k);
  report.symptoms_stage1 = pass1.symptoms;
  report.candidates_stage1 = pass1.candidates;
  report.pass_stats.tokens_pass1 = pass1.signals.prompt_token_total;

  if (variant == Variant::no_diagnosis) {
    const CandidateSet all = select_candidates(pass1.signals.step_attention, pass1.symptoms.members, trace.size());
    for (std::size_t r = 0; r < all.members.size(); ++r) {
      RankedEntry e;
      e.step_index = all.members[r];
      e.final_score = e.fuse_score = all.h_scores[r];
      for (auto m : pass1.symptoms.members) {
        if (e.step_index < m) e.linked_symptoms.push_back({m, pass1.signals.step_attention[m][e.step_index]});
      }
      std::sort(e.linked_symptoms.begin(), e.linked_symptoms.end(),
                [](const SymptomLink& a, const SymptomLink& b) { return a.symptom_step < b.symptom_step; });
      report.ranked.push_back(std::move(e));
    }
    run.pass1 = std::move(pass1);
    finish_ranking(report, trace, config);
    return run;
  }

  PromptPlan diagnosis;
  if (variant == Variant::no_restoration) {
    diagnosis = pass1.plan;
  } else {
    diagnosis = in_stage("diagnosis", [&] {
      return build_diagnosis_prompt(trace, pass1.symptoms.members, pass1.candidates->members, config, backend);
    });
    if (diagnosis.restoration_capped) report.conditions.emplace_back("restoration_capped");
  }
  PassRecord pass2 = run_pass(diagnosis, config, backend, "diagnosis");
  report.symptoms_stage2 = pass2.symptoms;
  report.pass_stats.tokens_pass2 = pass2.signals.prompt_token_total;

  run.scores = score_candidates(pass2.signals.step_attention, pass2.signals.step_nll, pass2.symptoms.members);
  report.ranked = fuse_and_rank(run.scores, config.consensus_lambda, config.top_m_for_consensus);
  run.pass1 = std::move(pass1);
  run.pass2 = std::move(pass2);
  finish_ranking(report, trace, config);
  return run;
}

nlohmann::ordered_json config_to_json(const DiagnosisConfig& c) {
  nlohmann::ordered_json j;
  j["symptom_ratio"] = c.symptom_ratio;
  j["candidate_k"] = c.candidate_k;
  j["consensus_lambda"] = c.consensus_lambda;
  j["filtering_budget_mode"] = c.filtering_budget_mode == BudgetMode::fixed ? "fixed" : "context_derived";
  j["filtering_budget_tokens"] = c.filtering_budget_tokens;
  j["context_margin"] = c.context_margin;
  j["compressed_prefix_tokens"] = c.compressed_prefix_tokens;
  j["restoration_cap_tokens"] = c.restoration_cap_tokens;
  j["layer_fraction"] = c.layer_fraction;
  j["failure_keywords"] = c.failure_keywords;
  j["top_m_for_consensus"] = c.top_m_for_consensus;
  j["max_submissions"] = c.max_submissions;
  j["seed"] = c.seed;
  return j;
}

nlohmann::ordered_json symptoms_to_json(const SymptomSet& s) {
  nlohmann::ordered_json j;
  j["members"] = s.members;
  auto one_based = s.members;
  for (auto& m : one_based) ++m;
  j["members_1based"] = one_based;
  j["scores"] = s.scores;
  j["keyword_flags"] = s.keyword_flags;
  return j;
}

nlohmann::ordered_json candidates_to_json(const CandidateSet& c) {
  nlohmann::ordered_json j;
  j["members"] = c.members;
  auto one_based = c.members;
  for (auto& m : one_based) ++m;
  j["members_1based"] = one_based;
  j["h_scores"] = c.h_scores;
  j["no_earlier_steps"] = c.no_earlier_steps;
  return j;
}

nlohmann::ordered_json report_to_json(const AttributionReport& r) {
  nlohmann::ordered_json j;
  j["trace_id"] = r.trace_id;
  j["tool_version"] = std::string(kToolVersion);
  j["variant"] = std::string(to_string(r.variant));
  j["backend"] = r.backend;
  auto ranked = nlohmann::ordered_json::array();
  for (const auto& e : r.ranked) {
    nlohmann::ordered_json je;
    je["step_index"] = e.step_index;
    je["step_number"] = e.step_index + 1;
    je["span_id"] = e.span_id ? nlohmann::ordered_json(*e.span_id) : nlohmann::ordered_json(nullptr);
    je["agent"] = e.agent;
    je["final_score"] = e.final_score;
    je["fuse_score"] = e.fuse_score;
    je["consensus_count"] = e.consensus_count;
    auto links = nlohmann::ordered_json::array();
    for (const auto& l : e.linked_symptoms) {
      nlohmann::ordered_json jl;
      jl["symptom_step"] = l.symptom_step;
      jl["symptom_step_number"] = l.symptom_step + 1;
      jl["s_value"] = l.s_value;
      links.push_back(std::move(jl));
    }
    je["linked_symptoms"] = std::move(links);
    je["submitted"] = e.submitted;
    ranked.push_back(std::move(je));
  }
  j["ranked"] = std::move(ranked);
  j["symptoms_stage1"] = symptoms_to_json(r.symptoms_stage1);
  j["candidates_stage1"] = r.candidates_stage1 ? candidates_to_json(*r.candidates_stage1) : nlohmann::ordered_json(nullptr);
  j["symptoms_stage2"] = r.symptoms_stage2 ? symptoms_to_json(*r.symptoms_stage2) : nlohmann::ordered_json(nullptr);
  j["pass_stats"] = {{"tokens_pass1", r.pass_stats.tokens_pass1}, {"tokens_pass2", r.pass_stats.tokens_pass2}};
  j["conditions"] = r.conditions;
  j["config_echo"] = config_to_json(r.config);
  return j;
}

}  // namespace prism
