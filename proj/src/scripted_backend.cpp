#include "prism/scripted_backend.hpp"

#include <fstream>

#include "prism/core.hpp"
#include "prism/kernels.hpp"

namespace prism {

using nlohmann::json;

ScriptedBackend::ScriptedBackend(StageSignals by_stage, std::size_t context_limit)
    : ScriptedBackend(std::map<std::string, StageSignals>{{"", std::move(by_stage)}}, context_limit) {}

ScriptedBackend::ScriptedBackend(std::map<std::string, StageSignals> by_trace, std::size_t context_limit)
    : by_trace_(std::move(by_trace)), context_limit_(context_limit) {
  if (by_trace_.empty()) throw Error(ErrorCode::malformed_document, "scripted backend has no fixtures");
  for (const auto& [id, stages] : by_trace_) {
    if (!stages.count(PromptStage::filtering))
      throw Error(ErrorCode::malformed_document, "scripted fixture '" + id + "' needs filtering signals");
    for (const auto& [stage, signals] : stages) {
      if (auto problems = check_signals(signals); !problems.empty())
        throw Error(ErrorCode::malformed_document,
                    std::string("scripted ") + std::string(to_string(stage)) + " fixture: " + problems.front());
    }
  }
}

PrefillSignals ScriptedBackend::parse_fixture(const json& fx) {
  if (!fx.is_object()) throw Error(ErrorCode::malformed_document, "fixture must be an object");
  try {
    if (fx.contains("tokens")) {
      const auto& toks = fx.at("tokens");
      std::vector<double> nll;
      std::vector<long> owner;
      std::size_t steps = 0;
      for (const auto& t : toks) {
        nll.push_back(t.at("nll").get<double>());
        if (t.contains("step") && !t["step"].is_null()) {
          const long s = t["step"].get<long>();
          if (s < 0) throw Error(ErrorCode::malformed_document, "negative token step");
          owner.push_back(s);
          steps = std::max(steps, static_cast<std::size_t>(s) + 1);
        } else {
          owner.push_back(-1);
        }
      }
      steps = fx.value("steps", steps);
      const auto alpha = fx.at("attention").get<std::vector<std::vector<double>>>();
      if (alpha.size() != nll.size())
        throw Error(ErrorCode::malformed_document, "attention rows must match token count");
      PrefillSignals s;
      auto means = kernels::step_means(nll, owner, steps);
      s.step_nll = std::move(means.mean);
      s.token_counts = std::move(means.count);
      s.step_attention = kernels::step_attention_from_tokens(alpha, owner, steps, kernels::Exec::serial);
      s.prompt_token_total = nll.size();
      s.layer_indices_used = {0};
      s.model_id = "scripted";
      return s;
    }
    PrefillSignals s;
    s.step_nll = fx.at("step_nll").get<std::vector<double>>();
    const std::size_t steps = fx.value("steps", s.step_nll.size());
    if (steps != s.step_nll.size())
      throw Error(ErrorCode::malformed_document, "fixture 'steps' disagrees with step_nll length");
    if (fx.contains("step_attention")) {
      s.step_attention = fx["step_attention"].get<StepAttention>();
    }
    if (s.step_attention.empty()) {
      s.step_attention.resize(steps);
      for (std::size_t i = 0; i < steps; ++i) s.step_attention[i].assign(i, 0.0);
    }
    for (std::size_t i = 0; i < s.step_attention.size(); ++i) {
      if (s.step_attention[i].size() > i) s.step_attention[i].resize(i);
    }
    s.token_counts = fx.value("token_counts", std::vector<std::size_t>(steps, 1));
    s.prompt_token_total = fx.value("prompt_token_total", std::size_t{0});
    s.layer_indices_used = {0};
    s.model_id = "scripted";
    if (auto problems = check_signals(s); !problems.empty())
      throw Error(ErrorCode::malformed_document, "fixture: " + problems.front());
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_document, std::string("fixture: ") + e.what());
  }
}

ScriptedBackend::StageSignals ScriptedBackend::parse_stages(const json& doc) {
  StageSignals stages;
  if (doc.is_object() && doc.contains("filtering")) {
    stages[PromptStage::filtering] = parse_fixture(doc["filtering"]);
    if (doc.contains("diagnosis")) stages[PromptStage::diagnosis] = parse_fixture(doc["diagnosis"]);
    if (doc.contains("raw")) stages[PromptStage::raw] = parse_fixture(doc["raw"]);
  } else {
    stages[PromptStage::filtering] = parse_fixture(doc);
  }
  return stages;
}

ScriptedBackend ScriptedBackend::from_json(const json& doc) {
  const std::size_t limit = doc.is_object() ? doc.value("context_limit", kDefaultContextLimit)
                                            : kDefaultContextLimit;
  if (doc.is_object() && doc.contains("traces")) {
    std::map<std::string, StageSignals> by_trace;
    if (!doc["traces"].is_object()) throw Error(ErrorCode::malformed_document, "'traces' must map ids to fixtures");
    for (const auto& [id, fx] : doc["traces"].items()) by_trace[id] = parse_stages(fx);
    return ScriptedBackend(std::move(by_trace), limit);
  }
  return ScriptedBackend(parse_stages(doc), limit);
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::input, "cannot read fixture " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_document, path.string() + ": " + e.what());
  }
}

const PrefillSignals& ScriptedBackend::signals_for(const std::string& trace_id, PromptStage stage) const {
  auto trace_it = by_trace_.find(trace_id);
  if (trace_it == by_trace_.end()) trace_it = by_trace_.find("");
  if (trace_it == by_trace_.end())
    throw Error(ErrorCode::shape_mismatch, "no scripted fixture for trace '" + trace_id + "'");
  const auto& stages = trace_it->second;
  if (auto it = stages.find(stage); it != stages.end()) return it->second;
  return stages.at(PromptStage::filtering);
}

BackendCapabilities ScriptedBackend::capabilities(double layer_fraction) const {
  BackendCapabilities caps;
  caps.context_limit = context_limit_;
  caps.layer_count = 1;
  caps.attention_layer_indices = select_attention_layers(1, layer_fraction);
  caps.model_id = "scripted";
  return caps;
}

std::size_t ScriptedBackend::count_tokens(std::string_view text) const {
  return whitespace_token_count(text);
}

Truncation ScriptedBackend::truncate_to_budget(std::string_view text, std::size_t budget) const {
  return whitespace_truncate(text, budget);
}

PrefillSignals ScriptedBackend::prefill(const PromptPlan& plan, double) const {
  const std::size_t tokens = whitespace_token_count(plan.text());
  if (tokens > context_limit_) {
    throw Error(ErrorCode::context_overflow,
                "prompt needs " + std::to_string(tokens) + " tokens, context holds " +
                    std::to_string(context_limit_));
  }
  PrefillSignals out = signals_for(plan.trace_id, plan.stage);
  if (out.step_count() != plan.step_count) {
    throw Error(ErrorCode::shape_mismatch,
                "plan has " + std::to_string(plan.step_count) + " steps, fixture has " +
                    std::to_string(out.step_count()));
  }
  if (out.prompt_token_total == 0) out.prompt_token_total = tokens;
  return out;
}

}  // namespace prism
