#pragma once

// Random trace and signal generators shared by the unit tests and the
// acceptance runner.

#include <cstdint>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "prism/backend.hpp"
#include "prism/core.hpp"
#include "prism/scripted_backend.hpp"

namespace gen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return oracle::splitmix(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

inline prism::Trace short_trace(Rng& rng, std::size_t n, const std::string& id, double keyword_rate = 0.15) {
  static const std::vector<std::string> words = {"plan", "search", "read", "answer", "check", "call",
                                                 "tool", "result", "value", "table", "page", "query"};
  prism::Trace t;
  t.trace_id = id;
  t.query = "find the value";
  for (std::size_t i = 0; i < n; ++i) {
    prism::Step s;
    s.index = i;
    s.agent = i % 2 ? "Assistant" : "WebSurfer";
    s.role = "assistant";
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t w = 0; w < len; ++w) {
      if (w) s.content += ' ';
      s.content += words[rng.below(words.size())];
    }
    if (rng.uniform() < keyword_rate) s.content += " error";
    t.steps.push_back(std::move(s));
  }
  return t;
}

inline prism::PrefillSignals random_signals(Rng& rng, std::size_t n, double zero_rate = 0.1) {
  prism::PrefillSignals s;
  s.step_nll.resize(n);
  s.step_attention.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.step_nll[i] = rng.uniform(0.5, 4.0);
    s.step_attention[i].resize(i);
    for (std::size_t j = 0; j < i; ++j)
      s.step_attention[i][j] = rng.uniform() < zero_rate ? 0.0 : rng.uniform(0.0, 0.2);
  }
  s.token_counts.assign(n, 4);
  s.layer_indices_used = {0};
  s.model_id = "scripted";
  return s;
}

inline std::vector<bool> keyword_flags(const prism::Trace& t, const std::vector<std::string>& keywords) {
  std::vector<bool> f;
  for (const auto& s : t.steps) f.push_back(oracle::has_keyword(s.content, keywords));
  return f;
}

}  // namespace gen
