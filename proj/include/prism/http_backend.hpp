#pragma once

#include <chrono>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "prism/backend.hpp"

namespace prism {

struct HttpBackendOptions {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{600};
};

// Client for the model sidecar (POST /v1/prefill, GET /v1/model_info).
// Budgeting uses the whitespace tokenizer locally; the sidecar counts real
// tokens and answers 413 when the prompt does not fit.
class HttpBackend final : public SignalBackend {
 public:
  explicit HttpBackend(std::string base_url, HttpBackendOptions options = {});

  std::string name() const override { return "http"; }
  BackendCapabilities capabilities(double layer_fraction) const override;
  std::size_t count_tokens(std::string_view text) const override;
  Truncation truncate_to_budget(std::string_view text, std::size_t budget) const override;
  PrefillSignals prefill(const PromptPlan& plan, double layer_fraction) const override;

  const std::string& base_url() const noexcept { return base_url_; }

  // Request body for /v1/prefill.
  static nlohmann::ordered_json prefill_request(const PromptPlan& plan, double layer_fraction,
                                                bool return_token_detail = false);

 private:
  // GET or POST with retry; returns the parsed JSON body of a 200 response.
  nlohmann::json call(const std::string& method, const std::string& path,
                      const std::string& body) const;

  std::string base_url_;
  HttpBackendOptions options_;
  mutable std::mutex info_mutex_;
  mutable std::optional<nlohmann::json> model_info_;
};

}  // namespace prism
