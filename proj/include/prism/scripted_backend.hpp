#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "prism/backend.hpp"

namespace prism {

// Fixture-driven backend for tests. A fixture is either step-level
//   {steps, step_nll: [...], step_attention: [[...]]}
// or token-level
//   {tokens: [{text, nll, step|null}], attention: [[...]]}
// in which case step signals are aggregated from the token matrix at load time. A document
// may hold one fixture for every prompt, or one per stage under the keys
// "filtering", "diagnosis" and "raw" (raw falls back to filtering). A
// dataset document {traces: {trace_id: document}} selects by the plan's
// trace id.
class ScriptedBackend final : public SignalBackend {
 public:
  static constexpr std::size_t kDefaultContextLimit = 1u << 20;

  using StageSignals = std::map<PromptStage, PrefillSignals>;

  ScriptedBackend(StageSignals by_stage, std::size_t context_limit = kDefaultContextLimit);
  ScriptedBackend(std::map<std::string, StageSignals> by_trace,
                  std::size_t context_limit = kDefaultContextLimit);

  static ScriptedBackend from_json(const nlohmann::json& doc);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  // Signals of one fixture object (either form).
  static PrefillSignals parse_fixture(const nlohmann::json& fixture);

  std::string name() const override { return "scripted"; }
  BackendCapabilities capabilities(double layer_fraction) const override;
  std::size_t count_tokens(std::string_view text) const override;
  Truncation truncate_to_budget(std::string_view text, std::size_t budget) const override;
  PrefillSignals prefill(const PromptPlan& plan, double layer_fraction) const override;

  const PrefillSignals& signals_for(const std::string& trace_id, PromptStage stage) const;

 private:
  static StageSignals parse_stages(const nlohmann::json& doc);

  // Key "" holds the trace-independent fixture.
  std::map<std::string, StageSignals> by_trace_;
  std::size_t context_limit_;
};

}  // namespace prism
