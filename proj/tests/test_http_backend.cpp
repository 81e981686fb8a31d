#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "generators.hpp"
#include "prism/attribution.hpp"
#include "prism/http_backend.hpp"
#include "prism/prompt_builder.hpp"
#include "prism/surrogate_backend.hpp"

using namespace prism;
using nlohmann::json;

namespace {

// In-process sidecar stand-in. Prefill answers come from the surrogate so
// the client sees realistic shapes.
class FakeSidecar {
 public:
  FakeSidecar() {
    server_.Get("/v1/model_info", [this](const httplib::Request&, httplib::Response& res) {
      ++info_calls;
      res.set_content(json{{"model_id", "fake"}, {"context_limit", context_limit.load()}, {"layer_count", 28},
                           {"head_count", 16}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/prefill", [this](const httplib::Request& req, httplib::Response& res) {
      ++prefill_calls;
      last_body = req.body;
      if (failures_left > 0) {
        --failures_left;
        res.status = fail_status;
        res.set_content("model loading", "text/plain");
        return;
      }
      if (force_status) {
        res.status = force_status;
        res.set_content("{\"error\":\"rejected\"}", "application/json");
        return;
      }
      const json doc = json::parse(req.body);
      PromptPlan plan;
      for (const auto& s : doc["segments"]) {
        Segment seg;
        seg.kind = segment_kind_from_string(s["kind"].get<std::string>());
        if (!s["step_index"].is_null()) {
          seg.step_index = s["step_index"].get<std::size_t>();
          plan.step_count = std::max(plan.step_count, *seg.step_index + 1);
        }
        seg.text = s["text"].get<std::string>();
        plan.segments.push_back(seg);
      }
      auto sig = SurrogateBackend(1 << 20).prefill(plan, doc["layer_fraction"].get<double>());
      sig.layer_indices_used = select_attention_layers(28, doc["layer_fraction"].get<double>());
      if (drop_step && !sig.step_nll.empty()) {
        sig.step_nll.pop_back();
        sig.step_attention.pop_back();
        sig.token_counts.pop_back();
      }
      res.set_content(signals_to_json(sig).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeSidecar() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> info_calls{0};
  std::atomic<int> prefill_calls{0};
  std::atomic<int> failures_left{0};
  std::atomic<std::size_t> context_limit{8192};
  int fail_status = 503;
  int force_status = 0;
  bool drop_step = false;
  std::string last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpBackendOptions fast() {
  HttpBackendOptions o;
  o.attempts = 3;
  o.initial_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

Trace sample_trace() {
  gen::Rng rng(41);
  return gen::short_trace(rng, 6, "http");
}

}  // namespace

TEST_SUITE("http_backend") {

TEST_CASE("prefill request carries segment kinds and character spans") {
  const Trace t = sample_trace();
  const PromptPlan plan = build_raw_prompt(t);
  const auto body = HttpBackend::prefill_request(plan, 0.2);
  REQUIRE(body["segments"].size() == plan.segments.size());
  const std::string text = plan.text();
  for (const auto& s : body["segments"]) {
    const auto off = s["char_offset"].get<std::size_t>();
    const auto end = s["char_end"].get<std::size_t>();
    CHECK(text.substr(off, end - off) == s["text"].get<std::string>());
  }
  CHECK(body["segments"][0]["kind"] == "system");
  CHECK(body["segments"][0]["step_index"].is_null());
  CHECK(body["segments"][1]["kind"] == "step_text");
  CHECK(body["layer_fraction"] == 0.2);
  CHECK(body["return_token_detail"] == false);
}

TEST_CASE("signals and capabilities come back from the sidecar") {
  FakeSidecar fake;
  const HttpBackend backend(fake.url(), fast());
  const auto caps = backend.capabilities(0.2);
  CHECK(caps.context_limit == 8192);
  CHECK(caps.attention_layer_indices.size() == 6);
  backend.capabilities(0.2);
  CHECK(fake.info_calls == 1);

  const Trace t = sample_trace();
  const auto plan = build_raw_prompt(t);
  const auto got = backend.prefill(plan, 0.2);
  const auto want = SurrogateBackend(1 << 20).prefill(plan, 0.2);
  CHECK(got.step_nll == want.step_nll);
  CHECK(got.step_attention == want.step_attention);
  CHECK(got.layer_indices_used.size() == 6);
  CHECK(json::parse(fake.last_body)["segments"].size() == plan.segments.size());
}

TEST_CASE("full pipeline over http matches the local surrogate") {
  FakeSidecar fake;
  fake.context_limit = 1 << 20;
  const HttpBackend remote(fake.url(), fast());
  const Trace t = sample_trace();
  const auto a = run_pipeline(t, DiagnosisConfig{}, remote);
  const auto b = run_pipeline(t, DiagnosisConfig{}, SurrogateBackend(1 << 20));
  REQUIRE(a.report.ranked.size() == b.report.ranked.size());
  for (std::size_t i = 0; i < a.report.ranked.size(); ++i)
    CHECK(a.report.ranked[i].step_index == b.report.ranked[i].step_index);
}

TEST_CASE("transient failures are retried") {
  FakeSidecar fake;
  fake.failures_left = 2;
  const HttpBackend backend(fake.url(), fast());
  CHECK_NOTHROW(backend.prefill(build_raw_prompt(sample_trace()), 0.2));
  CHECK(fake.prefill_calls == 3);
}

TEST_CASE("persistent failures become backend_unavailable") {
  FakeSidecar fake;
  fake.failures_left = 100;
  const HttpBackend backend(fake.url(), fast());
  try {
    backend.prefill(build_raw_prompt(sample_trace()), 0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::backend_unavailable);
  }
  CHECK(fake.prefill_calls == 3);
}

TEST_CASE("413 maps to context overflow without retry") {
  FakeSidecar fake;
  fake.force_status = 413;
  const HttpBackend backend(fake.url(), fast());
  try {
    backend.prefill(build_raw_prompt(sample_trace()), 0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::context_overflow);
  }
  CHECK(fake.prefill_calls == 1);
}

TEST_CASE("400 maps to a malformed request") {
  FakeSidecar fake;
  fake.force_status = 400;
  const HttpBackend backend(fake.url(), fast());
  try {
    backend.prefill(build_raw_prompt(sample_trace()), 0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::malformed_document);
  }
}

TEST_CASE("step count disagreement is a shape mismatch") {
  FakeSidecar fake;
  fake.drop_step = true;
  const HttpBackend backend(fake.url(), fast());
  try {
    backend.prefill(build_raw_prompt(sample_trace()), 0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
  }
}

TEST_CASE("unreachable sidecar is backend_unavailable") {
  const HttpBackend backend("http://127.0.0.1:1", fast());
  try {
    backend.capabilities(0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::backend_unavailable);
  }
}

}
