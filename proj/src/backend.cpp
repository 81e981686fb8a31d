#include "prism/backend.hpp"

#include <algorithm>
#include <cmath>

#include "prism/core.hpp"

namespace prism {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

std::vector<std::string> check_signals(const PrefillSignals& s) {
  std::vector<std::string> out;
  const std::size_t n = s.step_nll.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(s.step_nll[i]) || s.step_nll[i] < 0.0)
      out.push_back("step_nll[" + std::to_string(i) + "] is negative or non-finite");
  }
  if (s.step_attention.size() != n) {
    out.push_back("step_attention has " + std::to_string(s.step_attention.size()) +
                  " rows for " + std::to_string(n) + " steps");
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.step_attention[i].size() != i) {
      out.push_back("step_attention row " + std::to_string(i) + " is not lower-triangular");
      continue;
    }
    for (std::size_t j = 0; j < i; ++j) {
      const double v = s.step_attention[i][j];
      if (!std::isfinite(v) || v < 0.0)
        out.push_back("step_attention[" + std::to_string(i) + "][" + std::to_string(j) +
                      "] is negative or non-finite");
    }
  }
  if (!s.token_counts.empty() && s.token_counts.size() != n)
    out.emplace_back("token_counts length differs from step count");
  return out;
}

nlohmann::ordered_json signals_to_json(const PrefillSignals& s) {
  nlohmann::ordered_json doc;
  doc["step_nll"] = s.step_nll;
  doc["step_attention"] = s.step_attention;
  doc["token_counts"] = s.token_counts;
  doc["prompt_token_total"] = s.prompt_token_total;
  doc["model_id"] = s.model_id;
  doc["layer_indices_used"] = s.layer_indices_used;
  return doc;
}

PrefillSignals signals_from_json(const nlohmann::json& doc) {
  PrefillSignals s;
  try {
    s.step_nll = doc.at("step_nll").get<std::vector<double>>();
    s.step_attention = doc.at("step_attention").get<StepAttention>();
    s.token_counts = doc.value("token_counts", std::vector<std::size_t>{});
    s.prompt_token_total = doc.value("prompt_token_total", std::size_t{0});
    s.model_id = doc.value("model_id", std::string());
    s.layer_indices_used = doc.value("layer_indices_used", std::vector<std::size_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_document, std::string("prefill signals: ") + e.what());
  }
  // Accept full square rows and keep only the strictly lower part.
  for (std::size_t i = 0; i < s.step_attention.size(); ++i) {
    if (s.step_attention[i].size() > i) s.step_attention[i].resize(i);
  }
  if (auto problems = check_signals(s); !problems.empty())
    throw Error(ErrorCode::malformed_document, "prefill signals: " + problems.front());
  return s;
}

std::vector<std::size_t> select_attention_layers(std::size_t layer_count, double fraction) {
  if (layer_count == 0) return {};
  // Guard against 0.2 * 30 landing a hair above 6 in floating point.
  const double want = fraction * static_cast<double>(layer_count);
  auto take = static_cast<std::size_t>(std::ceil(want - 1e-9));
  take = std::clamp<std::size_t>(take, 1, layer_count);
  std::vector<std::size_t> out;
  for (std::size_t l = layer_count - take; l < layer_count; ++l) out.push_back(l);
  return out;
}

std::vector<TokenSpan> whitespace_tokens(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.push_back({begin, i});
  }
  return out;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

Truncation whitespace_truncate(std::string_view text, std::size_t budget) {
  const auto tokens = whitespace_tokens(text);
  if (tokens.size() <= budget) return {std::string(text), false};
  if (budget == 0) return {std::string(), true};
  return {std::string(text.substr(0, tokens[budget - 1].end)), true};
}

std::vector<long> assign_tokens_to_steps(const PromptPlan& plan,
                                         const std::vector<TokenSpan>& tokens) {
  const auto offsets = plan.offsets();
  std::vector<long> owner(tokens.size(), -1);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t pos = tokens[t].begin;
    while (seg + 1 < offsets.size() && offsets[seg + 1] <= pos) ++seg;
    if (seg >= plan.segments.size()) break;
    const auto& s = plan.segments[seg];
    if (pos >= offsets[seg] + s.text.size()) continue;  // on a join
    if (s.kind == SegmentKind::step_text && s.step_index)
      owner[t] = static_cast<long>(*s.step_index);
  }
  return owner;
}

}  // namespace prism
