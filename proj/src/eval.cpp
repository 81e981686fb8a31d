#include "prism/eval.hpp"

#include <algorithm>
#include <numeric>

#include "prism/kernels.hpp"
#include "prism/prompt_builder.hpp"
#include "prism/wilcoxon.hpp"

namespace prism {

namespace {

void finalize(MetricResult& m) { m.value = m.denominator > 0.0 ? m.numerator / m.denominator : 0.0; }

bool has_span_ids(const Trace& trace) {
  return std::any_of(trace.steps.begin(), trace.steps.end(), [](const Step& s) { return s.span_id.has_value(); });
}

// Top-n steps by NLL descending, ties to the smaller index.
std::vector<std::size_t> top_by_nll(const std::vector<double>& nll, std::size_t n) {
  std::vector<std::size_t> order(nll.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return nll[a] > nll[b]; });
  if (order.size() > n) order.resize(n);
  return order;
}

bool any_in(const std::vector<std::size_t>& picked, const std::vector<std::size_t>& truth) {
  return std::any_of(picked.begin(), picked.end(),
                     [&](std::size_t s) { return std::find(truth.begin(), truth.end(), s) != truth.end(); });
}

PrefillSignals filtering_signals(const Trace& trace, const SignalBackend& backend, const DiagnosisConfig& config,
                                 PromptPlan& plan_out) {
  const auto caps = backend.capabilities(config.layer_fraction);
  plan_out = build_filtering_prompt(trace, make_budget_plan(config, caps.context_limit, trace.size()), backend);
  return backend.prefill(plan_out, config.layer_fraction);
}

}  // namespace

std::uint64_t SeededRng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

MetricResult top1_accuracy(std::span<const AttributionReport> reports, std::span<const Trace> traces) {
  if (reports.size() != traces.size()) throw std::invalid_argument("one report per trace expected");
  MetricResult m;
  m.metric_name = "top1_accuracy";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Trace& t = traces[i];
    if (!t.annotations || !t.annotations->root_cause_step) {
      m.skipped.push_back(t.trace_id);
      continue;
    }
    TraceScore ts;
    ts.trace_id = t.trace_id;
    const auto& ranked = reports[i].ranked;
    ts.hit = !ranked.empty() && ranked.front().step_index == *t.annotations->root_cause_step;
    ts.score = ts.hit ? 1.0 : 0.0;
    if (ranked.empty()) ts.note = "empty ranking";
    m.numerator += ts.score;
    m.denominator += 1.0;
    m.per_trace.push_back(std::move(ts));
  }
  finalize(m);
  return m;
}

MetricResult location_accuracy(const AttributionReport& report, const std::set<std::string>& gt_spans,
                               std::size_t max_submissions) {
  if (gt_spans.empty()) throw Error(ErrorCode::missing_annotation, "no annotated error spans");
  MetricResult m;
  m.metric_name = "location_accuracy";
  std::vector<std::string> submitted;
  for (const auto& e : report.ranked) {
    if (!e.span_id) throw Error(ErrorCode::no_span_ids, "trace " + report.trace_id + " has steps without span ids");
    if (submitted.size() == max_submissions) break;
    if (std::find(submitted.begin(), submitted.end(), *e.span_id) == submitted.end()) submitted.push_back(*e.span_id);
  }
  std::size_t hits = 0;
  for (const auto& s : submitted) hits += gt_spans.count(s);
  m.numerator = static_cast<double>(hits);
  m.denominator = static_cast<double>(gt_spans.size());
  finalize(m);
  m.per_trace.push_back({report.trace_id, hits == gt_spans.size(), m.value, {}});
  return m;
}

MetricResult mean_location_accuracy(std::span<const AttributionReport> reports, std::span<const Trace> traces,
                                    std::size_t max_submissions) {
  if (reports.size() != traces.size()) throw std::invalid_argument("one report per trace expected");
  MetricResult m;
  m.metric_name = "location_accuracy";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Trace& t = traces[i];
    if (!t.annotations || !t.annotations->error_spans || t.annotations->error_spans->empty()) {
      m.skipped.push_back(t.trace_id);
      continue;
    }
    if (!has_span_ids(t)) {
      m.skipped.push_back(t.trace_id + " (no span ids)");
      continue;
    }
    const auto one = location_accuracy(reports[i], *t.annotations->error_spans, max_submissions);
    m.numerator += one.value;
    m.denominator += 1.0;
    m.per_trace.push_back(one.per_trace.front());
  }
  finalize(m);
  return m;
}

DatasetRun run_ablation(std::span<const Trace> traces, const SignalBackend& backend, const DiagnosisConfig& config,
                        Variant variant, int jobs) {
  check_config(config);
  DatasetRun run;
  const std::size_t n = traces.size();
  run.reports.resize(n);
  run.failures.resize(n);
  const long long nn = static_cast<long long>(n);

#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(jobs, 1))
  for (long long ii = 0; ii < nn; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      run.reports[i] = run_pipeline(traces[i], config, backend, variant).report;
    } catch (const Error& e) {
      run.failures[i] = std::string(to_string(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      run.failures[i] = std::string("internal: ") + e.what();
    }
  }

  std::vector<AttributionReport> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (run.reports[i]) {
      flat[i] = *run.reports[i];
    } else {
      flat[i].trace_id = traces[i].trace_id;
      flat[i].variant = variant;
    }
  }
  const bool step_level = std::any_of(traces.begin(), traces.end(), [](const Trace& t) {
    return t.annotations && t.annotations->root_cause_step;
  });
  run.metric = step_level ? top1_accuracy(flat, traces) : mean_location_accuracy(flat, traces, config.max_submissions);
  for (auto& ts : run.metric.per_trace) {
    for (std::size_t i = 0; i < n; ++i) {
      if (traces[i].trace_id == ts.trace_id && !run.failures[i].empty()) ts.note = "failed (" + run.failures[i] + ")";
    }
  }
  run.metric.metric_name += std::string("/") + std::string(to_string(variant));
  return run;
}

RoutingStudy nll_routing_study(std::span<const Trace> traces, const SignalBackend& backend,
                               const DiagnosisConfig& config, std::size_t top_n) {
  RoutingStudy study;
  study.nll_topn.metric_name = "nll_top" + std::to_string(top_n);
  study.attention_topn.metric_name = "attention_top" + std::to_string(top_n);
  study.context_limit = backend.capabilities(config.layer_fraction).context_limit;

  for (const auto& trace : traces) {
    const auto truth = ground_truth_steps(trace);
    if (truth.empty()) {
      study.nll_topn.skipped.push_back(trace.trace_id);
      study.attention_topn.skipped.push_back(trace.trace_id);
      continue;
    }
    PrefillSignals signals;
    std::string note;
    try {
      try {
        signals = backend.prefill(build_raw_prompt(trace), config.layer_fraction);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        PromptPlan plan;
        signals = filtering_signals(trace, backend, config, plan);
        study.fallback_traces.push_back(trace.trace_id);
        note = "filtering-prompt fallback";
      }
    } catch (const Error& e) {
      study.nll_topn.skipped.push_back(trace.trace_id + " (" + e.what() + ")");
      study.attention_topn.skipped.push_back(trace.trace_id + " (" + e.what() + ")");
      continue;
    }
    const auto high = top_by_nll(signals.step_nll, top_n);
    const bool nll_hit = any_in(high, truth);
    const auto routed = select_candidates(signals.step_attention, high, top_n);
    const bool att_hit = any_in(routed.members, truth);

    study.nll_topn.per_trace.push_back({trace.trace_id, nll_hit, nll_hit ? 1.0 : 0.0, note});
    study.attention_topn.per_trace.push_back({trace.trace_id, att_hit, att_hit ? 1.0 : 0.0, note});
    study.nll_topn.numerator += nll_hit;
    study.attention_topn.numerator += att_hit;
    study.nll_topn.denominator += 1.0;
    study.attention_topn.denominator += 1.0;
  }
  finalize(study.nll_topn);
  finalize(study.attention_topn);
  return study;
}

std::vector<std::pair<double, double>> ecdf(std::vector<double> samples) {
  std::vector<std::pair<double, double>> out;
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.emplace_back(samples[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

ValidityResult summarize_deltas(std::string name, std::vector<double> deltas) {
  ValidityResult r;
  r.comparison_name = std::move(name);
  r.n = deltas.size();
  r.unreliable = r.n < kMinValidityPairs;
  if (!deltas.empty()) {
    r.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(r.n);
    std::vector<double> sorted = deltas;
    std::sort(sorted.begin(), sorted.end());
    r.median_delta = r.n % 2 ? sorted[r.n / 2] : (sorted[r.n / 2 - 1] + sorted[r.n / 2]) / 2.0;
    r.win_rate = static_cast<double>(std::count_if(deltas.begin(), deltas.end(), [](double d) { return d > 0.0; })) /
                 static_cast<double>(r.n);
  }
  const auto test = stats::wilcoxon_greater(deltas);
  r.p_value = test.p_value;
  r.exact = test.exact;
  r.degenerate = test.degenerate;
  r.deltas = std::move(deltas);
  return r;
}

std::vector<ValidityResult> attention_validity_study(std::span<const Trace> traces, const SignalBackend& backend,
                                                     const DiagnosisConfig& config, std::uint64_t seed) {
  std::vector<double> vs_neighbor, vs_random, normalized_ranks;

  for (const auto& trace : traces) {
    const auto truth = ground_truth_steps(trace);
    if (truth.empty() || trace.size() < 3) continue;
    const std::size_t gt = truth.front();

    PromptPlan plan;
    PrefillSignals signals;
    try {
      signals = filtering_signals(trace, backend, config, plan);
    } catch (const Error&) {
      continue;
    }
    const auto symptoms = identify_symptoms(signals.step_nll, visible_step_bodies(plan), config.symptom_ratio,
                                            config.failure_keywords);
    const auto& members = symptoms.members;
    const std::size_t last = *std::max_element(members.begin(), members.end());
    auto is_symptom = [&](std::size_t k) { return std::find(members.begin(), members.end(), k) != members.end(); };
    auto mass = [&](std::size_t k) {
      double total = 0.0;
      for (auto m : members)
        if (k < m) total += signals.step_attention[m][k];
      return total;
    };
    const double gt_mass = mass(gt);

    std::optional<std::size_t> neighbor;
    if (gt > 0) {
      neighbor = gt - 1;
    } else {
      for (std::size_t k = 1; k < trace.size(); ++k) {
        if (!is_symptom(k)) {
          neighbor = k;
          break;
        }
      }
    }
    if (neighbor) vs_neighbor.push_back(gt_mass - mass(*neighbor));

    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < last; ++k)
      if (k != gt) pool.push_back(k);
    if (!pool.empty()) {
      SeededRng rng(seed ^ kernels::fnv1a64(trace.trace_id));
      vs_random.push_back(gt_mass - mass(pool[rng.below(pool.size())]));
    }

    if (gt < last) {
      std::size_t rank = 1;
      for (std::size_t k = 0; k < last; ++k) {
        const double mk = mass(k);
        if (mk > gt_mass || (mk == gt_mass && k < gt)) ++rank;
      }
      normalized_ranks.push_back(static_cast<double>(rank) / static_cast<double>(last));
    }
  }

  auto points = ecdf(normalized_ranks);
  std::vector<ValidityResult> out;
  out.push_back(summarize_deltas("gt_source_gt_neighbor", std::move(vs_neighbor)));
  out.push_back(summarize_deltas("gt_source_gt_random_earlier", std::move(vs_random)));
  for (auto& r : out) r.ecdf_points = points;
  return out;
}

nlohmann::ordered_json metric_to_json(const MetricResult& m) {
  nlohmann::ordered_json j;
  j["metric_name"] = m.metric_name;
  j["value"] = m.value;
  j["numerator"] = m.numerator;
  j["denominator"] = m.denominator;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& t : m.per_trace) {
    nlohmann::ordered_json r;
    r["trace_id"] = t.trace_id;
    r["hit"] = t.hit;
    r["score"] = t.score;
    if (!t.note.empty()) r["note"] = t.note;
    rows.push_back(std::move(r));
  }
  j["per_trace"] = std::move(rows);
  j["skipped"] = m.skipped;
  return j;
}

nlohmann::ordered_json validity_to_json(const ValidityResult& r) {
  nlohmann::ordered_json j;
  j["comparison_name"] = r.comparison_name;
  j["n"] = r.n;
  j["mean_delta"] = r.mean_delta;
  j["median_delta"] = r.median_delta;
  j["win_rate"] = r.win_rate;
  j["p_value"] = r.p_value;
  j["exact"] = r.exact;
  j["degenerate"] = r.degenerate;
  j["unreliable"] = r.unreliable;
  j["deltas"] = r.deltas;
  auto pts = nlohmann::ordered_json::array();
  for (const auto& [x, y] : r.ecdf_points) pts.push_back({x, y});
  j["ecdf_points"] = std::move(pts);
  return j;
}

}  // namespace prism
