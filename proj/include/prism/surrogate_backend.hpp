#pragma once

#include "prism/backend.hpp"
#include "prism/kernels.hpp"

namespace prism {

// Deterministic model-free backend. Token NLL and attention come from FNV-1a
// hashes of whitespace tokens (see kernels.hpp), so every downstream number
// is reproducible bit for bit.
class SurrogateBackend final : public SignalBackend {
 public:
  explicit SurrogateBackend(std::size_t context_limit = 8192,
                            kernels::Exec exec = kernels::Exec::parallel)
      : context_limit_(context_limit), exec_(exec) {}

  std::string name() const override { return "surrogate"; }
  BackendCapabilities capabilities(double layer_fraction) const override;
  std::size_t count_tokens(std::string_view text) const override;
  Truncation truncate_to_budget(std::string_view text, std::size_t budget) const override;
  PrefillSignals prefill(const PromptPlan& plan, double layer_fraction) const override;

 private:
  std::size_t context_limit_;
  kernels::Exec exec_;
};

}  // namespace prism
