#include "prism/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prism/attribution.hpp"
#include "prism/eval.hpp"
#include "prism/http_backend.hpp"
#include "prism/ingest.hpp"
#include "prism/scripted_backend.hpp"
#include "prism/surrogate_backend.hpp"

namespace prism::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Options {
  std::vector<std::string> inputs;
  std::string format = "whowhen";
  std::string backend = "surrogate";
  std::string backend_url;
  std::string fixture;
  std::string preset;
  std::optional<double> symptom_ratio;
  std::optional<std::size_t> k;
  std::optional<double> lambda;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> compressed_prefix;
  std::optional<double> layer_fraction;
  std::optional<std::string> keywords;
  std::optional<std::size_t> max_submissions;
  std::string variant = "full";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  std::string ecdf_out;
  std::size_t context_limit = 8192;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::backend_unavailable: return kExitBackend;
    case ErrorCode::configuration: return kExitConfig;
    default: return kExitInput;
  }
}

DiagnosisConfig make_config(const Options& o) {
  DiagnosisConfig c;
  if (o.preset == "trail") c = DiagnosisConfig::trail_preset();
  else if (o.preset == "whowhen" || o.preset.empty()) c = DiagnosisConfig::whowhen_preset();
  else throw Error(ErrorCode::configuration, "unknown preset '" + o.preset + "'");
  if (o.symptom_ratio) c.symptom_ratio = *o.symptom_ratio;
  if (o.k) c.candidate_k = *o.k;
  if (o.lambda) c.consensus_lambda = *o.lambda;
  if (o.budget) {
    c.filtering_budget_mode = BudgetMode::fixed;
    c.filtering_budget_tokens = *o.budget;
  }
  if (o.compressed_prefix) c.compressed_prefix_tokens = *o.compressed_prefix;
  if (o.layer_fraction) c.layer_fraction = *o.layer_fraction;
  if (o.keywords) {
    c.failure_keywords.clear();
    std::stringstream ss(*o.keywords);
    std::string kw;
    while (std::getline(ss, kw, ',')) {
      if (kw.empty()) continue;
      std::transform(kw.begin(), kw.end(), kw.begin(), [](unsigned char ch) { return std::tolower(ch); });
      c.failure_keywords.push_back(kw);
    }
  }
  if (o.max_submissions) c.max_submissions = *o.max_submissions;
  if (o.seed) c.seed = *o.seed;
  check_config(c);
  return c;
}

std::unique_ptr<SignalBackend> make_backend(const Options& o) {
  if (o.backend == "surrogate") return std::make_unique<SurrogateBackend>(o.context_limit);
  if (o.backend == "scripted") {
    if (o.fixture.empty()) throw Error(ErrorCode::configuration, "--backend scripted requires --fixture");
    return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(o.fixture));
  }
  if (o.backend == "http") {
    std::string url = o.backend_url;
    if (url.empty()) {
      if (const char* env = std::getenv("PRISM_BACKEND_URL")) url = env;
    }
    if (url.empty())
      throw Error(ErrorCode::configuration, "--backend http requires --backend-url or PRISM_BACKEND_URL");
    return std::make_unique<HttpBackend>(url);
  }
  throw Error(ErrorCode::configuration, "unknown backend '" + o.backend + "'");
}

SourceFormat parse_format(const std::string& name) {
  if (name == "whowhen") return SourceFormat::whowhen;
  if (name == "openinference") return SourceFormat::openinference;
  throw Error(ErrorCode::configuration, "unknown format '" + name + "'");
}

struct Loaded {
  std::vector<Trace> traces;
};

Loaded load_inputs(const Options& o, std::ostream& err) {
  const SourceFormat format = parse_format(o.format);
  std::vector<fs::path> files;
  for (const auto& in : o.inputs) {
    const fs::path p(in);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      auto listed = list_trace_files(p);
      files.insert(files.end(), listed.begin(), listed.end());
    } else if (fs::is_regular_file(p, ec)) {
      files.push_back(p);
    } else {
      throw Error(ErrorCode::input, "cannot read input " + in);
    }
  }
  Loaded loaded;
  for (const auto& f : files) {
    IngestResult r = load_trace_file(f, format);
    for (const auto& w : r.warnings) err << f.string() << ": warning: " << w << "\n";
    if (auto v = validate_trace(r.trace); !v.empty())
      throw Error(ErrorCode::input, f.string() + ": " + v.front());
    loaded.traces.push_back(std::move(r.trace));
  }
  return loaded;
}

ojson envelope(const DiagnosisConfig& config, const Options& o, const char* command) {
  ojson doc;
  doc["tool"] = "prism";
  doc["tool_version"] = std::string(kToolVersion);
  doc["command"] = command;
  doc["backend"] = o.backend;
  doc["config_echo"] = config_to_json(config);
  return doc;
}

void emit(const ojson& doc, const Options& o, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw Error(ErrorCode::input, "cannot write " + o.out);
  f << text;
}

int cmd_diagnose(const Options& o, std::ostream& out, std::ostream& err) {
  const auto config = make_config(o);
  const auto backend = make_backend(o);
  const auto loaded = load_inputs(o, err);
  if (loaded.traces.empty()) throw Error(ErrorCode::input, "no traces found");

  const auto run = run_ablation(loaded.traces, *backend, config, variant_from_string(o.variant), o.jobs);
  ojson doc = envelope(config, o, "diagnose");
  doc["variant"] = o.variant;
  auto reports = ojson::array();
  int status = kExitOk;
  for (std::size_t i = 0; i < loaded.traces.size(); ++i) {
    if (run.reports[i]) {
      reports.push_back(report_to_json(*run.reports[i]));
    } else {
      err << "trace " << loaded.traces[i].trace_id << ": " << run.failures[i] << "\n";
      const bool backend_down = run.failures[i].rfind(std::string(to_string(ErrorCode::backend_unavailable)), 0) == 0;
      status = std::max(status, backend_down ? kExitBackend : kExitInput);
    }
  }
  doc["reports"] = std::move(reports);
  emit(doc, o, out);
  return status;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto config = make_config(o);
  const auto backend = make_backend(o);
  const auto loaded = load_inputs(o, err);
  if (loaded.traces.empty()) throw Error(ErrorCode::input, "empty dataset");

  const auto variant = variant_from_string(o.variant);
  const auto run = run_ablation(loaded.traces, *backend, config, variant, o.jobs);
  ojson doc = envelope(config, o, "evaluate");
  const ojson metric = metric_to_json(run.metric);
  for (const auto& [key, value] : metric.items()) doc[key] = value;
  doc["variant"] = o.variant;
  doc["seed"] = config.seed;
  std::size_t failed = 0;
  for (const auto& f : run.failures) failed += !f.empty();
  doc["failed_traces"] = failed;
  emit(doc, o, out);
  return kExitOk;
}

int cmd_analyze(const Options& o, std::ostream& out, std::ostream& err) {
  const auto config = make_config(o);
  const auto backend = make_backend(o);
  const auto loaded = load_inputs(o, err);
  if (loaded.traces.empty()) throw Error(ErrorCode::input, "empty dataset");

  const auto routing = nll_routing_study(loaded.traces, *backend, config);
  const auto validity = attention_validity_study(loaded.traces, *backend, config, config.seed);
  ojson doc = envelope(config, o, "analyze");
  doc["seed"] = config.seed;
  ojson r;
  r["nll_top5"] = metric_to_json(routing.nll_topn);
  r["attention_top5"] = metric_to_json(routing.attention_topn);
  r["fallback_traces"] = routing.fallback_traces;
  r["context_limit"] = routing.context_limit;
  doc["routing"] = std::move(r);
  auto v = ojson::array();
  for (const auto& res : validity) v.push_back(validity_to_json(res));
  doc["validity"] = std::move(v);
  emit(doc, o, out);

  if (!o.ecdf_out.empty()) {
    std::ofstream f(o.ecdf_out, std::ios::binary);
    if (!f) throw Error(ErrorCode::input, "cannot write " + o.ecdf_out);
    f << "normalized_rank\tcumulative_fraction\n";
    if (!validity.empty()) {
      for (const auto& [x, y] : validity.front().ecdf_points) f << x << "\t" << y << "\n";
    }
  }
  return kExitOk;
}

ojson pass_to_json(const PassRecord& pass) {
  ojson j;
  j["plan"] = plan_to_json(pass.plan);
  j["signals"] = signals_to_json(pass.signals);
  j["symptoms"] = symptoms_to_json(pass.symptoms);
  j["candidates"] = pass.candidates ? candidates_to_json(*pass.candidates) : ojson(nullptr);
  return j;
}

int cmd_signals_dump(const Options& o, std::ostream& out, std::ostream& err) {
  const auto config = make_config(o);
  const auto backend = make_backend(o);
  const auto loaded = load_inputs(o, err);
  if (loaded.traces.size() != 1) throw Error(ErrorCode::input, "signals-dump takes exactly one trace");

  const auto run = run_pipeline(loaded.traces.front(), config, *backend, variant_from_string(o.variant));
  ojson doc = envelope(config, o, "signals-dump");
  doc["trace_id"] = loaded.traces.front().trace_id;
  doc["pass1"] = run.pass1 ? pass_to_json(*run.pass1) : ojson(nullptr);
  doc["pass2"] = run.pass2 ? pass_to_json(*run.pass2) : ojson(nullptr);
  ojson scores;
  for (const auto& [m, row] : run.scores.s) scores[std::to_string(m)] = row;
  doc["s_table"] = std::move(scores);
  doc["report"] = report_to_json(run.report);
  emit(doc, o, out);
  return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out, std::ostream& err) {
  const auto loaded = load_inputs(o, err);
  if (loaded.traces.empty()) throw Error(ErrorCode::input, "no traces found");
  if (loaded.traces.size() == 1) {
    emit(trace_to_json(loaded.traces.front()), o, out);
    return kExitOk;
  }
  if (o.out.empty()) {
    auto all = ojson::array();
    for (const auto& t : loaded.traces) all.push_back(trace_to_json(t));
    out << all.dump(2) << "\n";
    return kExitOk;
  }
  fs::create_directories(o.out);
  for (const auto& t : loaded.traces) {
    std::ofstream f(fs::path(o.out) / (t.trace_id + ".json"), std::ios::binary);
    if (!f) throw Error(ErrorCode::input, "cannot write into " + o.out);
    f << trace_to_json(t).dump(2) << "\n";
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("inputs", o.inputs, "Trace files or dataset directories")->required();
  sub->add_option("--format", o.format, "Input format: whowhen | openinference");
  sub->add_option("--backend", o.backend, "Signal backend: surrogate | scripted | http");
  sub->add_option("--backend-url", o.backend_url, "Sidecar base URL (or PRISM_BACKEND_URL)");
  sub->add_option("--fixture", o.fixture, "Scripted signal fixture");
  sub->add_option("--preset", o.preset, "Hyperparameter preset: whowhen | trail");
  sub->add_option("--symptom-ratio", o.symptom_ratio, "Share of steps taken as symptoms");
  sub->add_option("--k", o.k, "Candidates kept after filtering");
  sub->add_option("--lambda", o.lambda, "Consensus weight");
  sub->add_option("--budget", o.budget, "Fixed per-step token budget for filtering");
  sub->add_option("--compressed-prefix", o.compressed_prefix, "Prefix tokens of unrestored steps");
  sub->add_option("--layer-fraction", o.layer_fraction, "Share of final layers averaged for attention");
  sub->add_option("--keywords", o.keywords, "Comma-separated failure keywords");
  sub->add_option("--max-submissions", o.max_submissions, "Locations submitted per trace");
  sub->add_option("--variant", o.variant, "full | no_filtering | no_diagnosis | no_restoration");
  sub->add_option("--seed", o.seed, "Sampling seed");
  sub->add_option("--jobs", o.jobs, "Traces processed concurrently")->check(CLI::PositiveNumber);
  sub->add_option("--context-limit", o.context_limit, "Context size of the surrogate backend");
  sub->add_option("--out", o.out, "Output path");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"prism: prefill-signal failure attribution for multi-agent traces", "prism"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Options o;
  auto* diagnose = app.add_subcommand("diagnose", "Rank failure sources for each trace");
  auto* evaluate = app.add_subcommand("evaluate", "Top-1 / Loc. Acc. over an annotated dataset");
  auto* analyze = app.add_subcommand("analyze", "Routing hit rates and attention-validity tests");
  auto* dump = app.add_subcommand("signals-dump", "Write both passes' prompts and signals for one trace");
  auto* exporter = app.add_subcommand("export", "Re-serialize traces in canonical form");
  for (auto* sub : {diagnose, evaluate, analyze, dump, exporter}) add_common(sub, o);
  analyze->add_option("--ecdf-out", o.ecdf_out, "Two-column ECDF table of normalized GT ranks");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*diagnose) return cmd_diagnose(o, out, err);
    if (*evaluate) return cmd_evaluate(o, out, err);
    if (*analyze) return cmd_analyze(o, out, err);
    if (*dump) return cmd_signals_dump(o, out, err);
    if (*exporter) return cmd_export(o, out, err);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    err << (code == kExitConfig ? "configuration error: " : code == kExitBackend ? "backend error: " : "input error: ")
        << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitConfig;
}

}  // namespace prism::cli
