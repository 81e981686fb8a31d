#include <doctest.h>

#include "generators.hpp"
#include "prism/eval.hpp"
#include "prism/ingest.hpp"
#include "prism/scripted_backend.hpp"
#include "prism/surrogate_backend.hpp"

using namespace prism;

namespace {

std::string fx(const std::string& rel) { return std::string(PRISM_FIXTURES) + "/" + rel; }

std::vector<Trace> whowhen_set() {
  std::vector<Trace> out;
  for (const auto& f : list_trace_files(fx("whowhen"))) out.push_back(load_trace_file(f, SourceFormat::whowhen).trace);
  return out;
}

AttributionReport ranking(std::initializer_list<const char*> spans) {
  AttributionReport r;
  r.trace_id = "r";
  std::size_t i = 0;
  for (const char* s : spans) {
    RankedEntry e;
    e.step_index = i++;
    e.span_id = s;
    r.ranked.push_back(e);
  }
  return r;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("top-1 on the scripted who&when set matches the hand tally") {
  const auto traces = whowhen_set();
  REQUIRE(traces.size() == 4);
  const auto backend = ScriptedBackend::from_file(fx("scripted/whowhen_set.json"));
  const auto run = run_ablation(traces, backend, DiagnosisConfig::whowhen_preset(), Variant::full);
  // ww_001 hit (step 3), ww_002 miss, ww_003 hit (step 1), ww_004 miss.
  std::vector<std::size_t> top;
  for (const auto& r : run.reports) top.push_back(r->ranked.front().step_index);
  CHECK(top == std::vector<std::size_t>{3, 1, 1, 0});
  CHECK(run.metric.numerator == 2.0);
  CHECK(run.metric.denominator == 4.0);
  CHECK(run.metric.value == 0.5);
  CHECK(run.metric.metric_name == "top1_accuracy/full");
}

TEST_CASE("traces without a label are skipped by top-1") {
  auto traces = whowhen_set();
  traces[1].annotations.reset();
  std::vector<AttributionReport> reports(traces.size());
  const auto m = top1_accuracy(reports, traces);
  CHECK(m.denominator == 3.0);
  CHECK(m.skipped == std::vector<std::string>{"ww_002"});
  CHECK(m.value == 0.0);
}

TEST_CASE("location accuracy counts distinct submitted spans") {
  CHECK(location_accuracy(ranking({"a", "b"}), {"a", "c"}, 10).value == 0.5);
  CHECK(location_accuracy(ranking({"a", "a", "c"}), {"a", "c"}, 2).value == 1.0);
  CHECK(location_accuracy(ranking({"b", "a", "c"}), {"a", "c"}, 1).value == 0.0);
  CHECK(location_accuracy(ranking({}), {"a"}, 10).value == 0.0);
}

TEST_CASE("location accuracy never drops as submissions grow") {
  gen::Rng rng(12);
  for (int round = 0; round < 200; ++round) {
    AttributionReport r;
    const std::size_t n = 1 + rng.below(15);
    for (std::size_t i = 0; i < n; ++i) {
      RankedEntry e;
      e.step_index = i;
      e.span_id = "s" + std::to_string(rng.below(8));
      r.ranked.push_back(e);
    }
    std::set<std::string> gt;
    while (gt.empty() || rng.uniform() < 0.5) gt.insert("s" + std::to_string(rng.below(8)));
    double prev = 0.0;
    for (std::size_t k = 0; k <= 16; ++k) {
      const double v = location_accuracy(r, gt, k).value;
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("location accuracy needs span ids") {
  AttributionReport r;
  r.ranked.push_back(RankedEntry{});
  try {
    location_accuracy(r, {"a"}, 10);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_span_ids);
  }
}

TEST_CASE("span-annotated trace scores one half under any backend") {
  const std::vector<Trace> traces = {load_trace_file(fx("trail/tr_001.json"), SourceFormat::openinference).trace};
  const auto run = run_ablation(traces, SurrogateBackend(), DiagnosisConfig::trail_preset(), Variant::full);
  CHECK(run.metric.metric_name == "location_accuracy/full");
  CHECK(run.metric.value == 0.5);
}

TEST_CASE("parallel dataset runs keep input order and results") {
  gen::Rng rng(13);
  std::vector<Trace> traces;
  for (int i = 0; i < 12; ++i) {
    traces.push_back(gen::short_trace(rng, 3 + rng.below(9), "t" + std::to_string(i)));
    traces.back().annotations = Annotations{rng.below(3), std::nullopt, std::nullopt};
  }
  const SurrogateBackend backend;
  const auto one = run_ablation(traces, backend, DiagnosisConfig{}, Variant::full, 1);
  const auto four = run_ablation(traces, backend, DiagnosisConfig{}, Variant::full, 4);
  for (std::size_t i = 0; i < traces.size(); ++i)
    CHECK(report_to_json(*one.reports[i]).dump() == report_to_json(*four.reports[i]).dump());
  CHECK(one.metric.value == four.metric.value);
}

TEST_CASE("routing study on the scripted set") {
  const auto traces = whowhen_set();
  const auto backend = ScriptedBackend::from_file(fx("scripted/whowhen_set.json"));
  const auto study = nll_routing_study(traces, backend, DiagnosisConfig{}, 1);
  // Highest-NLL step per trace: 5, 3, 2, 3; none is the annotated step.
  CHECK(study.nll_topn.value == 0.0);
  // Attention routes from those steps onto 3, 1, 1, 0.
  CHECK(study.attention_topn.numerator == 2.0);
  CHECK(study.fallback_traces.empty());
}

TEST_CASE("routing falls back to the filtering prompt when the raw trace overflows") {
  gen::Rng rng(14);
  std::vector<Trace> traces = {gen::short_trace(rng, 4, "long", 0.0), gen::short_trace(rng, 4, "short", 0.0)};
  for (auto& s : traces[0].steps)
    for (int w = 0; w < 100; ++w) s.content += " pad" + std::to_string(w);
  for (auto& t : traces) t.annotations = Annotations{0, std::nullopt, std::nullopt};
  const auto study = nll_routing_study(traces, SurrogateBackend(200), DiagnosisConfig{});
  CHECK(study.fallback_traces == std::vector<std::string>{"long"});
  CHECK(study.nll_topn.denominator == 2.0);
  CHECK(study.nll_topn.per_trace[0].note == "filtering-prompt fallback");
}

TEST_CASE("validity study compares annotated mass to neighbor and random steps") {
  const auto traces = whowhen_set();
  const auto backend = ScriptedBackend::from_file(fx("scripted/whowhen_set.json"));
  const auto res = attention_validity_study(traces, backend, DiagnosisConfig{}, 42);
  REQUIRE(res.size() == 2);
  CHECK(res[0].comparison_name == "gt_source_gt_neighbor");
  CHECK(res[0].n == 4);
  // ww_001: symptoms {5, 4}, mass(3) = 0.7 + 0.6, mass(2) = 0.2.
  CHECK(res[0].deltas[0] == doctest::Approx(1.1));
  // ww_002: gt 2, neighbor 1: 0.2 - 0.7.
  CHECK(res[0].deltas[1] == doctest::Approx(-0.5));
  CHECK(res[0].unreliable);
  const auto again = attention_validity_study(traces, backend, DiagnosisConfig{}, 42);
  CHECK(again[1].deltas == res[1].deltas);
  CHECK_FALSE(res[0].ecdf_points.empty());
}

TEST_CASE("ecdf and delta summaries") {
  const auto pts = ecdf({0.5, 0.25, 0.5, 1.0});
  REQUIRE(pts.size() == 3);
  CHECK(pts[0] == std::pair<double, double>{0.25, 0.25});
  CHECK(pts[1] == std::pair<double, double>{0.5, 0.75});
  CHECK(pts[2] == std::pair<double, double>{1.0, 1.0});
  const auto s = summarize_deltas("x", {1, 2, 3, -1});
  CHECK(s.mean_delta == 1.25);
  CHECK(s.median_delta == 1.5);
  CHECK(s.win_rate == 0.75);
}

TEST_CASE("seeded rng is a plain splitmix64 stream") {
  SeededRng a(0);
  CHECK(a.next() == 0xe220a8397b1dcdafull);
  std::uint64_t state = 99;
  SeededRng b(99);
  for (int i = 0; i < 5; ++i) CHECK(b.next() == oracle::splitmix(state));
  SeededRng c(1);
  for (int i = 0; i < 1000; ++i) CHECK(c.below(7) < 7);
}

}
