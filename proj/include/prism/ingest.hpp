#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/core.hpp"

namespace prism {

// Attribute payloads longer than this are cut at ingest.
inline constexpr std::size_t kPayloadCapChars = 20000;

struct IngestResult {
  Trace trace;
  // Non-fatal problems, e.g. a label that was dropped.
  std::vector<std::string> warnings;
};

struct RenderedStep {
  std::size_t step_index = 0;
  std::string header;
  std::string body;
};

// "Step {index+1} [{agent}/{role}]:" plus the verbatim content.
RenderedStep render_step(const Step& step);

// Who&When record: {question, history: [{name|role, content}], mistake_step,
// mistake_agent}. mistake_step is 1-based.
IngestResult parse_whowhen(const nlohmann::json& doc,
                           const std::string& fallback_id = "trace");

// OpenInference spans, either a bare list, {spans: [...]}, or nested through
// child_spans. `ground_truth` is the optional sidecar
// {trace_id, error_span_ids: [...]} (TRAIL-style {errors: [{location}]} also
// accepted).
IngestResult parse_openinference(const nlohmann::json& doc,
                                 const nlohmann::json* ground_truth = nullptr,
                                 const std::string& fallback_id = "trace");

// Canonical lossless document written by `export`.
nlohmann::ordered_json trace_to_json(const Trace& trace);
Trace trace_from_json(const nlohmann::json& doc);

// Any accepted document with a top-level "prism_trace" key is treated as
// canonical regardless of the requested format.
IngestResult load_trace_file(const std::filesystem::path& path,
                             SourceFormat format);

// Trace files of a dataset directory, sorted by name. Sidecar annotation
// files (*.gt.json) are skipped.
std::vector<std::filesystem::path> list_trace_files(
    const std::filesystem::path& dir);

// Seconds since the Unix epoch as (seconds, nanoseconds). Throws
// Error(malformed_document) on anything that is not RFC 3339.
std::pair<long long, long> parse_rfc3339(const std::string& text);

}  // namespace prism
