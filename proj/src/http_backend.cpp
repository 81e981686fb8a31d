#include "prism/http_backend.hpp"

#include <thread>

#include <httplib.h>

#include "prism/core.hpp"

namespace prism {

using nlohmann::json;

HttpBackend::HttpBackend(std::string base_url, HttpBackendOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) throw Error(ErrorCode::configuration, "empty backend URL");
  if (options_.attempts < 1) options_.attempts = 1;
}

nlohmann::ordered_json HttpBackend::prefill_request(const PromptPlan& plan, double layer_fraction,
                                                    bool return_token_detail) {
  nlohmann::ordered_json body;
  auto segs = nlohmann::ordered_json::array();
  const auto offs = plan.offsets();
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    const auto& seg = plan.segments[i];
    nlohmann::ordered_json js;
    js["kind"] = std::string(to_string(seg.kind));
    js["step_index"] = seg.step_index ? nlohmann::ordered_json(*seg.step_index) : nlohmann::ordered_json(nullptr);
    js["text"] = seg.text;
    js["char_offset"] = offs[i];
    js["char_end"] = offs[i] + seg.text.size();
    segs.push_back(std::move(js));
  }
  body["segments"] = std::move(segs);
  body["layer_fraction"] = layer_fraction;
  body["return_token_detail"] = return_token_detail;
  return body;
}

json HttpBackend::call(const std::string& method, const std::string& path,
                       const std::string& body) const {
  std::string last_error = "no attempt made";
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count());
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count());
    auto res = method == "GET" ? client.Get(path) : client.Post(path, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::backend_unavailable, path + ": unparseable response: " + e.what());
      }
    } else if (res->status == 413) {
      throw Error(ErrorCode::context_overflow, "sidecar rejected prompt: " + res->body);
    } else if (res->status == 400) {
      throw Error(ErrorCode::malformed_document, "sidecar rejected request: " + res->body);
    } else {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    }
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::backend_unavailable,
              base_url_ + path + " unavailable after " + std::to_string(options_.attempts) +
                  " attempts (" + last_error + ")");
}

BackendCapabilities HttpBackend::capabilities(double layer_fraction) const {
  json info;
  {
    std::lock_guard lock(info_mutex_);
    if (!model_info_) model_info_ = call("GET", "/v1/model_info", {});
    info = *model_info_;
  }
  BackendCapabilities caps;
  try {
    caps.context_limit = info.at("context_limit").get<std::size_t>();
    caps.layer_count = info.value("layer_count", std::size_t{1});
    caps.model_id = info.value("model_id", std::string("unknown"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::backend_unavailable, std::string("model_info: ") + e.what());
  }
  caps.attention_layer_indices = select_attention_layers(caps.layer_count, layer_fraction);
  return caps;
}

std::size_t HttpBackend::count_tokens(std::string_view text) const {
  return whitespace_token_count(text);
}

Truncation HttpBackend::truncate_to_budget(std::string_view text, std::size_t budget) const {
  return whitespace_truncate(text, budget);
}

PrefillSignals HttpBackend::prefill(const PromptPlan& plan, double layer_fraction) const {
  const json response = call("POST", "/v1/prefill", prefill_request(plan, layer_fraction).dump());
  PrefillSignals out;
  try {
    out = signals_from_json(response);
  } catch (const Error& e) {
    throw Error(ErrorCode::backend_unavailable, std::string("sidecar response: ") + e.what());
  }
  if (out.step_count() != plan.step_count) {
    throw Error(ErrorCode::shape_mismatch,
                "sidecar returned " + std::to_string(out.step_count()) + " steps for a " +
                    std::to_string(plan.step_count) + "-step plan");
  }
  return out;
}

}  // namespace prism
