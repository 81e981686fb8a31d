#include "prism/prompt_plan.hpp"

#include "prism/core.hpp"

namespace prism {

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::system: return "system";
    case SegmentKind::note: return "note";
    case SegmentKind::step_text: return "step_text";
    case SegmentKind::omission_marker: return "omission_marker";
  }
  return "system";
}

SegmentKind segment_kind_from_string(std::string_view name) {
  if (name == "system") return SegmentKind::system;
  if (name == "note") return SegmentKind::note;
  if (name == "step_text") return SegmentKind::step_text;
  if (name == "omission_marker") return SegmentKind::omission_marker;
  throw Error(ErrorCode::malformed_document, "unknown segment kind '" + std::string(name) + "'");
}

std::string_view to_string(PromptStage stage) {
  switch (stage) {
    case PromptStage::filtering: return "filtering";
    case PromptStage::diagnosis: return "diagnosis";
    case PromptStage::raw: return "raw";
  }
  return "filtering";
}

std::string PromptPlan::text() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += '\n';
    out += segments[i].text;
  }
  return out;
}

std::vector<std::size_t> PromptPlan::offsets() const {
  std::vector<std::size_t> out;
  out.reserve(segments.size());
  std::size_t pos = 0;
  for (const auto& seg : segments) {
    out.push_back(pos);
    pos += seg.text.size() + 1;
  }
  return out;
}

std::vector<std::size_t> PromptPlan::step_segment_positions() const {
  std::vector<std::size_t> out(step_count, segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.kind == SegmentKind::step_text && seg.step_index && *seg.step_index < step_count)
      out[*seg.step_index] = i;
  }
  return out;
}

nlohmann::ordered_json plan_to_json(const PromptPlan& plan) {
  nlohmann::ordered_json doc;
  doc["stage"] = std::string(to_string(plan.stage));
  doc["trace_id"] = plan.trace_id;
  doc["step_count"] = plan.step_count;
  doc["per_step_budget"] = plan.per_step_budget;
  doc["restoration_capped"] = plan.restoration_capped;
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
    if (seg.kind == SegmentKind::step_text) js["body_offset"] = seg.body_offset;
    segs.push_back(std::move(js));
  }
  doc["segments"] = std::move(segs);
  return doc;
}

PromptPlan plan_from_json(const nlohmann::json& doc) {
  PromptPlan plan;
  try {
    const std::string stage = doc.value("stage", std::string("filtering"));
    plan.stage = stage == "diagnosis" ? PromptStage::diagnosis
               : stage == "raw"       ? PromptStage::raw
                                      : PromptStage::filtering;
    plan.trace_id = doc.value("trace_id", std::string());
    plan.per_step_budget = doc.value("per_step_budget", std::size_t{0});
    plan.restoration_capped = doc.value("restoration_capped", false);
    std::size_t steps = 0;
    for (const auto& js : doc.at("segments")) {
      Segment seg;
      seg.kind = segment_kind_from_string(js.at("kind").get<std::string>());
      if (js.contains("step_index") && !js["step_index"].is_null())
        seg.step_index = js["step_index"].get<std::size_t>();
      seg.text = js.at("text").get<std::string>();
      seg.body_offset = js.value("body_offset", std::size_t{0});
      if (seg.kind == SegmentKind::step_text) ++steps;
      plan.segments.push_back(std::move(seg));
    }
    plan.step_count = doc.value("step_count", steps);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_document, std::string("prompt plan: ") + e.what());
  }
  return plan;
}

}  // namespace prism
