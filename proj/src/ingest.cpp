#include "prism/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace prism {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& msg) {
  throw Error(ErrorCode::malformed_document, msg);
}

std::string as_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

std::string first_string(const json& obj, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    auto it = obj.find(key);
    if (it != obj.end() && !it->is_null()) return as_text(*it);
  }
  return {};
}

std::string cap_payload(std::string text, bool& capped) {
  if (text.size() > kPayloadCapChars) {
    text.resize(kPayloadCapChars);
    capped = true;
  }
  return text;
}

struct RawSpan {
  json node;
  std::pair<long long, long> start;
  std::size_t order;
};

void collect_spans(const json& node, std::vector<RawSpan>& out) {
  if (node.is_array()) {
    for (const auto& child : node) collect_spans(child, out);
    return;
  }
  if (!node.is_object()) malformed("span entry is not an object");
  out.push_back(RawSpan{node, {0, 0}, out.size()});
  if (auto it = node.find("child_spans"); it != node.end())
    collect_spans(*it, out);
}

std::string span_status(const json& span) {
  for (const char* key : {"status_code", "status"}) {
    auto it = span.find(key);
    if (it == span.end() || it->is_null()) continue;
    if (it->is_object()) return first_string(*it, {"status_code", "code", "message"});
    return as_text(*it);
  }
  return {};
}

std::optional<std::size_t> parse_label(const json& v) {
  if (v.is_number_integer()) {
    const auto x = v.get<long long>();
    if (x < 0) return std::nullopt;
    return static_cast<std::size_t>(x);
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) {
          return std::isdigit(c);
        }))
      return std::nullopt;
    return static_cast<std::size_t>(std::stoull(s));
  }
  return std::nullopt;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

}  // namespace

RenderedStep render_step(const Step& step) {
  return RenderedStep{step.index,
                      "Step " + std::to_string(step.index + 1) + " [" +
                          step.agent + "/" + step.role + "]:",
                      step.content};
}

std::pair<long long, long> parse_rfc3339(const std::string& text) {
  // YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)
  auto bad = [&]() -> std::pair<long long, long> {
    malformed("invalid RFC 3339 timestamp '" + text + "'");
  };
  if (text.size() < 20) return bad();
  auto digits = [&](std::size_t pos, std::size_t len) -> int {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i])))
        bad();
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != 't' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':')
    return bad();
  const int year = digits(0, 4), month = digits(5, 2), day = digits(8, 2);
  const int hour = digits(11, 2), minute = digits(14, 2), second = digits(17, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 ||
      minute > 59 || second > 60)
    return bad();
  std::size_t pos = 19;
  long nanos = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int ndig = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (ndig < 9) nanos = nanos * 10 + (text[pos] - '0');
      ++ndig;
      ++pos;
    }
    if (ndig == 0) return bad();
    for (int i = std::min(ndig, 9); i < 9; ++i) nanos *= 10;
  }
  long long offset = 0;
  if (pos >= text.size()) return bad();
  if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '-' ? -1 : 1;
    if (pos + 6 != text.size() || text[pos + 3] != ':') return bad();
    offset = sign * (digits(pos + 1, 2) * 3600LL + digits(pos + 4, 2) * 60LL);
    pos += 6;
  } else {
    return bad();
  }
  if (pos != text.size()) return bad();
  const long long secs = days_from_civil(year, static_cast<unsigned>(month),
                                         static_cast<unsigned>(day)) *
                             86400LL +
                         hour * 3600LL + minute * 60LL + second - offset;
  return {secs, nanos};
}

IngestResult parse_whowhen(const json& doc, const std::string& fallback_id) {
  if (!doc.is_object()) malformed("Who&When record must be an object");
  auto hist = doc.find("history");
  if (hist == doc.end() || !hist->is_array())
    malformed("Who&When record has no 'history' list");

  IngestResult out;
  Trace& trace = out.trace;
  trace.source_format = SourceFormat::whowhen;
  trace.trace_id = first_string(doc, {"trace_id", "id"});
  if (trace.trace_id.empty()) trace.trace_id = fallback_id;
  trace.query = first_string(doc, {"question", "query"});

  for (const auto& entry : *hist) {
    if (!entry.is_object()) malformed("history entry is not an object");
    Step step;
    step.index = trace.steps.size();
    const std::string name = first_string(entry, {"name"});
    const std::string role = first_string(entry, {"role"});
    step.agent = !name.empty() ? name : (!role.empty() ? role : "agent");
    step.role = !role.empty() ? role : "message";
    if (auto c = entry.find("content"); c != entry.end()) step.content = as_text(*c);
    trace.steps.push_back(std::move(step));
  }
  if (trace.steps.empty()) malformed("Who&When record has an empty history");

  Annotations ann;
  bool have = false;
  if (auto it = doc.find("mistake_step"); it != doc.end() && !it->is_null()) {
    const auto label = parse_label(*it);
    if (!label || *label < 1 || *label > trace.size()) {
      out.warnings.push_back("label-out-of-range: mistake_step " + as_text(*it) +
                             " outside [1, " + std::to_string(trace.size()) +
                             "]; annotation dropped");
    } else {
      ann.root_cause_step = *label - 1;
      have = true;
    }
  }
  if (auto it = doc.find("mistake_agent"); it != doc.end() && !it->is_null()) {
    ann.root_cause_agent = as_text(*it);
  }
  if (have) trace.annotations = std::move(ann);
  return out;
}

IngestResult parse_openinference(const json& doc, const json* ground_truth,
                                 const std::string& fallback_id) {
  IngestResult out;
  Trace& trace = out.trace;
  trace.source_format = SourceFormat::openinference;

  const json* spans_node = &doc;
  if (doc.is_object()) {
    trace.trace_id = first_string(doc, {"trace_id", "id"});
    trace.query = first_string(doc, {"query", "question"});
    auto it = doc.find("spans");
    if (it == doc.end()) malformed("OpenInference document has no 'spans'");
    spans_node = &*it;
  }
  if (!spans_node->is_array()) malformed("OpenInference spans must be a list");

  std::vector<RawSpan> spans;
  collect_spans(*spans_node, spans);
  if (spans.empty()) malformed("OpenInference document contains no spans");

  for (auto& span : spans) {
    auto id = span.node.find("span_id");
    if (id == span.node.end() || !id->is_string() || id->get<std::string>().empty())
      throw Error(ErrorCode::missing_span_id,
                  "span #" + std::to_string(span.order) + " has no span_id");
    auto ts = span.node.find("start_time");
    if (ts == span.node.end()) malformed("span " + id->get<std::string>() + " has no start_time");
    if (ts->is_string()) {
      span.start = parse_rfc3339(ts->get<std::string>());
    } else if (ts->is_number()) {
      const double v = ts->get<double>();
      span.start = {static_cast<long long>(v), static_cast<long>((v - static_cast<long long>(v)) * 1e9)};
    } else {
      malformed("span " + id->get<std::string>() + " has a non-timestamp start_time");
    }
    if (trace.trace_id.empty()) trace.trace_id = first_string(span.node, {"trace_id"});
  }
  std::stable_sort(spans.begin(), spans.end(),
                   [](const RawSpan& a, const RawSpan& b) { return a.start < b.start; });

  for (const auto& span : spans) {
    const json& node = span.node;
    static const json kEmpty = json::object();
    const json* attrs = &kEmpty;
    if (auto it = node.find("attributes"); it != node.end() && it->is_object())
      attrs = &*it;

    Step step;
    step.index = trace.steps.size();
    step.span_id = node.at("span_id").get<std::string>();
    const std::string name = first_string(node, {"name", "span_name"});
    step.agent = first_string(*attrs, {"agent.name"});
    if (step.agent.empty()) step.agent = name.empty() ? "span" : name;
    step.role = first_string(*attrs, {"openinference.span.kind"});
    std::transform(step.role.begin(), step.role.end(), step.role.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (step.role.empty()) step.role = "span";

    std::vector<std::string> parts;
    if (!name.empty()) parts.push_back(name);
    for (const char* key : {"input.value", "output.value"}) {
      auto it = attrs->find(key);
      if (it != attrs->end() && !it->is_null())
        parts.push_back(cap_payload(as_text(*it), step.payload_capped));
    }
    if (auto status = span_status(node); !status.empty()) parts.push_back(status);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) step.content += '\n';
      step.content += parts[i];
    }
    if (trace.query.empty() && step.index == 0) {
      // Root span input is the user request in OpenInference agent traces.
      if (auto it = attrs->find("input.value"); it != attrs->end() && it->is_string())
        trace.query = cap_payload(it->get<std::string>(), step.payload_capped);
    }
    trace.steps.push_back(std::move(step));
  }
  if (trace.trace_id.empty()) trace.trace_id = fallback_id;

  if (ground_truth && !ground_truth->is_null()) {
    if (!ground_truth->is_object()) malformed("annotation sidecar must be an object");
    std::set<std::string> ids;
    if (auto it = ground_truth->find("error_span_ids"); it != ground_truth->end()) {
      for (const auto& v : *it) ids.insert(as_text(v));
    } else if (auto errs = ground_truth->find("errors"); errs != ground_truth->end()) {
      // TRAIL labels carry category/evidence too; only the location is used.
      for (const auto& e : *errs) {
        const std::string loc = first_string(e, {"location", "span_id"});
        if (!loc.empty()) ids.insert(loc);
      }
    } else {
      malformed("annotation sidecar has neither error_span_ids nor errors");
    }
    std::set<std::string> known;
    for (const auto& s : trace.steps) known.insert(*s.span_id);
    std::set<std::string> kept;
    for (const auto& id : ids) {
      if (known.count(id)) kept.insert(id);
      else out.warnings.push_back("annotated span '" + id + "' not present in trace; dropped");
    }
    if (!kept.empty()) {
      Annotations ann;
      ann.error_spans = std::move(kept);
      trace.annotations = std::move(ann);
    }
  }
  return out;
}

nlohmann::ordered_json trace_to_json(const Trace& trace) {
  nlohmann::ordered_json doc;
  doc["prism_trace"] = 1;
  doc["trace_id"] = trace.trace_id;
  doc["source_format"] = std::string(to_string(trace.source_format));
  doc["query"] = trace.query;
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : trace.steps) {
    nlohmann::ordered_json js;
    js["index"] = s.index;
    js["agent"] = s.agent;
    js["role"] = s.role;
    js["content"] = s.content;
    if (s.span_id) js["span_id"] = *s.span_id;
    if (s.payload_capped) js["payload_capped"] = true;
    steps.push_back(std::move(js));
  }
  doc["steps"] = std::move(steps);
  if (trace.annotations) {
    nlohmann::ordered_json ann = nlohmann::ordered_json::object();
    const auto& a = *trace.annotations;
    if (a.root_cause_step) {
      ann["root_cause_step"] = *a.root_cause_step;
      ann["root_cause_step_1based"] = *a.root_cause_step + 1;
    }
    if (a.error_spans) ann["error_spans"] = std::vector<std::string>(a.error_spans->begin(), a.error_spans->end());
    if (a.root_cause_agent) ann["root_cause_agent"] = *a.root_cause_agent;
    doc["annotations"] = std::move(ann);
  }
  return doc;
}

Trace trace_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("steps") || !doc["steps"].is_array())
    malformed("canonical trace document has no 'steps' list");
  Trace trace;
  try {
    trace.trace_id = doc.value("trace_id", std::string("trace"));
    trace.query = doc.value("query", std::string());
    trace.source_format = source_format_from_string(doc.value("source_format", std::string("synthetic")));
    for (const auto& js : doc["steps"]) {
      Step s;
      s.index = js.at("index").get<std::size_t>();
      s.agent = js.value("agent", std::string());
      s.role = js.value("role", std::string());
      s.content = js.value("content", std::string());
      if (js.contains("span_id")) s.span_id = js["span_id"].get<std::string>();
      s.payload_capped = js.value("payload_capped", false);
      trace.steps.push_back(std::move(s));
    }
    if (auto it = doc.find("annotations"); it != doc.end() && it->is_object()) {
      Annotations a;
      if (it->contains("root_cause_step")) a.root_cause_step = (*it)["root_cause_step"].get<std::size_t>();
      if (it->contains("error_spans")) {
        a.error_spans.emplace();
        for (const auto& v : (*it)["error_spans"]) a.error_spans->insert(v.get<std::string>());
      }
      if (it->contains("root_cause_agent")) a.root_cause_agent = (*it)["root_cause_agent"].get<std::string>();
      trace.annotations = std::move(a);
    }
  } catch (const json::exception& e) {
    malformed(std::string("canonical trace document: ") + e.what());
  }
  return trace;
}

IngestResult load_trace_file(const std::filesystem::path& path, SourceFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::input, "cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    malformed(path.string() + ": " + e.what());
  }
  std::string stem = path.filename().string();
  if (auto dot = stem.find('.'); dot != std::string::npos) stem.resize(dot);

  if (doc.is_object() && doc.contains("prism_trace")) return IngestResult{trace_from_json(doc), {}};
  switch (format) {
    case SourceFormat::whowhen:
      return parse_whowhen(doc, stem);
    case SourceFormat::openinference: {
      auto gt_path = path;
      gt_path.replace_filename(stem + ".gt.json");
      if (std::filesystem::exists(gt_path)) {
        std::ifstream gin(gt_path, std::ios::binary);
        json gt;
        try {
          gt = json::parse(gin);
        } catch (const json::parse_error& e) {
          malformed(gt_path.string() + ": " + e.what());
        }
        return parse_openinference(doc, &gt, stem);
      }
      return parse_openinference(doc, nullptr, stem);
    }
    case SourceFormat::synthetic:
      return IngestResult{trace_from_json(doc), {}};
  }
  malformed("unsupported format");
}

std::vector<std::filesystem::path> list_trace_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.size() < 5 || name.substr(name.size() - 5) != ".json") continue;
    if (name.size() >= 8 && name.substr(name.size() - 8) == ".gt.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace prism
