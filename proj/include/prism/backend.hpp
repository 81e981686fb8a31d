#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/prompt_plan.hpp"

namespace prism {

// Strictly lower-triangular step-to-step attention: row i holds i entries,
// entry [i][j] is the mass step i assigns to earlier step j.
using StepAttention = std::vector<std::vector<double>>;

struct PrefillSignals {
  std::vector<double> step_nll;
  StepAttention step_attention;
  std::vector<std::size_t> token_counts;
  std::size_t prompt_token_total = 0;
  std::vector<std::size_t> layer_indices_used;
  std::string model_id;

  std::size_t step_count() const noexcept { return step_nll.size(); }

  friend bool operator==(const PrefillSignals&, const PrefillSignals&) = default;
};

// Empty iff the structural invariants hold (lower-triangular shape,
// non-negative finite NLL and attention).
std::vector<std::string> check_signals(const PrefillSignals& signals);

nlohmann::ordered_json signals_to_json(const PrefillSignals& signals);
PrefillSignals signals_from_json(const nlohmann::json& doc);

struct BackendCapabilities {
  std::size_t context_limit = 0;
  std::size_t layer_count = 1;
  std::vector<std::size_t> attention_layer_indices;
  std::string model_id;
};

// Last ceil(fraction * layer_count) layers, at least one.
std::vector<std::size_t> select_attention_layers(std::size_t layer_count, double fraction);

struct Truncation {
  std::string prefix;
  bool truncated = false;

  friend bool operator==(const Truncation&, const Truncation&) = default;
};

class SignalBackend {
 public:
  virtual ~SignalBackend() = default;

  virtual std::string name() const = 0;
  virtual BackendCapabilities capabilities(double layer_fraction) const = 0;
  virtual std::size_t count_tokens(std::string_view text) const = 0;
  // budget >= 1. The prefix ends at a token boundary and holds at most
  // `budget` tokens.
  virtual Truncation truncate_to_budget(std::string_view text, std::size_t budget) const = 0;
  // Throws Error(context_overflow) when the prompt exceeds the context limit.
  virtual PrefillSignals prefill(const PromptPlan& plan, double layer_fraction) const = 0;
};

// Whitespace tokenizer shared by the surrogate and scripted backends: tokens
// are maximal runs of non-whitespace characters.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<TokenSpan> whitespace_tokens(std::string_view text);
std::size_t whitespace_token_count(std::string_view text);
Truncation whitespace_truncate(std::string_view text, std::size_t budget);

// Owning step of every prompt token under the first-character rule; -1 for
// tokens that fall in system/note/marker segments or on segment joins.
std::vector<long> assign_tokens_to_steps(const PromptPlan& plan,
                                         const std::vector<TokenSpan>& tokens);

}  // namespace prism
