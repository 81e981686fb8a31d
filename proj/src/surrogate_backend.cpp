#include "prism/surrogate_backend.hpp"

#include "prism/core.hpp"

namespace prism {

BackendCapabilities SurrogateBackend::capabilities(double layer_fraction) const {
  BackendCapabilities caps;
  caps.context_limit = context_limit_;
  caps.layer_count = 1;
  caps.attention_layer_indices = select_attention_layers(1, layer_fraction);
  caps.model_id = "surrogate-fnv1a64";
  return caps;
}

std::size_t SurrogateBackend::count_tokens(std::string_view text) const {
  return whitespace_token_count(text);
}

Truncation SurrogateBackend::truncate_to_budget(std::string_view text, std::size_t budget) const {
  return whitespace_truncate(text, budget);
}

PrefillSignals SurrogateBackend::prefill(const PromptPlan& plan, double layer_fraction) const {
  const std::string text = plan.text();
  const auto spans = whitespace_tokens(text);
  if (spans.size() > context_limit_) {
    throw Error(ErrorCode::context_overflow,
                "prompt needs " + std::to_string(spans.size()) + " tokens, context holds " +
                    std::to_string(context_limit_));
  }
  std::vector<std::string_view> tokens;
  tokens.reserve(spans.size());
  for (const auto& s : spans) tokens.push_back(std::string_view(text).substr(s.begin, s.end - s.begin));
  const auto owner = assign_tokens_to_steps(plan, spans);

  const auto nll = kernels::surrogate_token_nll(tokens);
  auto means = kernels::step_means(nll, owner, plan.step_count);

  PrefillSignals out;
  out.step_nll = std::move(means.mean);
  out.token_counts = std::move(means.count);
  out.step_attention = kernels::surrogate_step_attention(tokens, owner, plan.step_count, exec_);
  out.prompt_token_total = tokens.size();
  out.layer_indices_used = select_attention_layers(1, layer_fraction);
  out.model_id = "surrogate-fnv1a64";
  return out;
}

}  // namespace prism
