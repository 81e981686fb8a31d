#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prism {

inline constexpr std::string_view kOmissionMarker = "[...]";

enum class SegmentKind { system, note, step_text, omission_marker };

std::string_view to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(std::string_view name);

// Which prompt a plan was built for. Scripted fixtures key their signals by
// stage; real backends ignore it.
enum class PromptStage { filtering, diagnosis, raw };

std::string_view to_string(PromptStage stage);

struct Segment {
  SegmentKind kind = SegmentKind::system;
  std::optional<std::size_t> step_index;
  std::string text;
  // For step_text: number of leading characters (header plus separator)
  // before the step body.
  std::size_t body_offset = 0;

  std::string_view body() const { return std::string_view(text).substr(body_offset); }

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct PromptPlan {
  PromptStage stage = PromptStage::filtering;
  std::string trace_id;
  std::vector<Segment> segments;
  std::size_t step_count = 0;
  // Budget applied to truncated step bodies (0 when nothing is truncated).
  std::size_t per_step_budget = 0;
  bool restoration_capped = false;

  // Segment texts joined with single newlines.
  std::string text() const;
  // Character offset of each segment's first character within text().
  std::vector<std::size_t> offsets() const;
  // Segment position of the step_text for each step, in step order.
  std::vector<std::size_t> step_segment_positions() const;

  friend bool operator==(const PromptPlan&, const PromptPlan&) = default;
};

// Wire form shared by signals-dump and the HTTP prefill request:
// ordered {kind, step_index, text, char_offset, char_end}.
nlohmann::ordered_json plan_to_json(const PromptPlan& plan);
PromptPlan plan_from_json(const nlohmann::json& doc);

}  // namespace prism
