#pragma once

// Fixed prompt strings. Token NLL is sensitive to every byte here; change
// them only together with the golden fixtures.

#include <string_view>

namespace prism::prompt_text {

inline constexpr std::string_view kFilteringSystem =
    "[System] This trace has been truncated. Each step shows a bounded prefix of key "
    "content. [...] marks omitted text. Focus on error patterns and causal chains. "
    "Omissions are expected.";

inline constexpr std::string_view kDiagnosisSystem =
    "[System] This execution trace has been reconstructed. Key steps retain full content; "
    "other steps are compressed with [...] placeholders. Analyze which earlier step or "
    "location is most responsible for the observed failure.";

inline constexpr std::string_view kDiagnosisNote =
    "[Note]: The next step shows anomalous behavior. Trace backward to identify which "
    "earlier step caused it.";

inline constexpr std::string_view kQueryPrefix = "User request: ";

}  // namespace prism::prompt_text
