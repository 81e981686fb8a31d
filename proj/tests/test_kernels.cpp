#include <doctest.h>

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "generators.hpp"
#include "oracles.hpp"
#include "prism/kernels.hpp"
#include "prism/prompt_builder.hpp"
#include "prism/surrogate_backend.hpp"

using namespace prism;
namespace k = prism::kernels;

namespace {

double max_abs_diff(const StepAttention& a, const StepAttention& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].size() == b[i].size());
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::fabs(a[i][j] - b[i][j]));
  }
  return worst;
}

std::vector<std::string> random_words(gen::Rng& rng, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(rng.below(40)));
  return out;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("fnv1a64 reference values") {
  CHECK(k::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(k::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(k::fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(k::fnv1a64_pair("foo", "bar") == k::fnv1a64(std::string("foo\x1f") + "bar"));
}

TEST_CASE("step attention on a hand-worked token field") {
  const std::vector<std::vector<double>> alpha = {
      {1.0},
      {0.4, 0.6},
      {0.2, 0.3, 0.5},
      {0.1, 0.2, 0.3, 0.4},
      {0.05, 0.15, 0.2, 0.25, 0.35},
  };
  const std::vector<long> owner = {0, 0, 1, 2, 2};
  for (auto exec : {k::Exec::serial, k::Exec::parallel}) {
    const auto a = k::step_attention_from_tokens(alpha, owner, 3, exec);
    REQUIRE(a.size() == 3);
    CHECK(a[0].empty());
    CHECK(std::fabs(a[1][0] - 0.5) < 1e-12);
    CHECK(std::fabs(a[2][0] - 0.25) < 1e-12);
    CHECK(std::fabs(a[2][1] - 0.25) < 1e-12);
  }
}

TEST_CASE("context tokens count toward neither side") {
  const std::vector<std::vector<double>> alpha = {
      {1.0}, {0.5, 0.5}, {0.2, 0.3, 0.5}, {0.1, 0.2, 0.3, 0.4}};
  const std::vector<long> owner = {-1, 0, -1, 1};
  const auto a = k::step_attention_from_tokens(alpha, owner, 2, k::Exec::serial);
  CHECK(a[1][0] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("serial and parallel kernels agree on random token fields") {
  gen::Rng rng(7);
  for (int round = 0; round < 25; ++round) {
    const std::size_t steps = 1 + rng.below(10);
    const std::size_t n = steps + rng.below(120);
    std::vector<long> owner(n);
    for (auto& o : owner) o = rng.uniform() < 0.1 ? -1 : static_cast<long>(rng.below(steps));
    std::sort(owner.begin(), owner.end());

    std::vector<std::vector<double>> alpha(n);
    for (std::size_t t = 0; t < n; ++t) {
      alpha[t].resize(t + 1);
      for (auto& v : alpha[t]) v = rng.uniform();
    }
    const auto s = k::step_attention_from_tokens(alpha, owner, steps, k::Exec::serial);
    const auto p = k::step_attention_from_tokens(alpha, owner, steps, k::Exec::parallel);
    CHECK(max_abs_diff(s, p) < 1e-12);
    CHECK(max_abs_diff(s, oracle::aggregate(alpha, owner, steps)) < 1e-12);

    const auto words = random_words(rng, n);
    std::vector<std::string_view> views(words.begin(), words.end());
    const auto ss = k::surrogate_step_attention(views, owner, steps, k::Exec::serial);
    const auto sp = k::surrogate_step_attention(views, owner, steps, k::Exec::parallel);
    CHECK(max_abs_diff(ss, sp) < 1e-12);
  }
}

TEST_CASE("parallel output does not depend on the thread count") {
#ifdef _OPENMP
  gen::Rng rng(19);
  const std::size_t steps = 8, n = 300;
  std::vector<long> owner(n);
  for (std::size_t t = 0; t < n; ++t) owner[t] = static_cast<long>(t * steps / n);
  std::vector<std::vector<double>> alpha(n);
  for (std::size_t t = 0; t < n; ++t) {
    alpha[t].resize(t + 1);
    for (auto& v : alpha[t]) v = rng.uniform();
  }
  const auto words = random_words(rng, n);
  std::vector<std::string_view> views(words.begin(), words.end());
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto d1 = k::step_attention_from_tokens(alpha, owner, steps, k::Exec::parallel);
  const auto s1 = k::surrogate_step_attention(views, owner, steps, k::Exec::parallel);
  omp_set_num_threads(4);
  const auto d4 = k::step_attention_from_tokens(alpha, owner, steps, k::Exec::parallel);
  const auto s4 = k::surrogate_step_attention(views, owner, steps, k::Exec::parallel);
  omp_set_num_threads(before);
  CHECK(d1 == d4);
  CHECK(s1 == s4);
#endif
}

TEST_CASE("surrogate backend matches its definition rebuilt from scratch") {
  gen::Rng rng(11);
  for (int round = 0; round < 10; ++round) {
    Trace t = gen::short_trace(rng, 2 + rng.below(8), "t" + std::to_string(round));
    const PromptPlan plan = build_raw_prompt(t);
    for (auto exec : {k::Exec::serial, k::Exec::parallel}) {
      const auto got = SurrogateBackend(1 << 20, exec).prefill(plan, 0.2);
      const auto want = oracle::surrogate_prefill(plan);
      CHECK(got.prompt_token_total == want.prompt_token_total);
      CHECK(got.token_counts == want.token_counts);
      for (std::size_t i = 0; i < got.step_count(); ++i)
        CHECK(std::fabs(got.step_nll[i] - want.step_nll[i]) < 1e-12);
      CHECK(max_abs_diff(got.step_attention, want.step_attention) < 1e-12);
    }
  }
}

TEST_CASE("surrogate step rows never exceed unit mass") {
  gen::Rng rng(3);
  Trace t = gen::short_trace(rng, 9, "mass");
  const auto sig = SurrogateBackend().prefill(build_raw_prompt(t), 0.2);
  for (const auto& row : sig.step_attention) {
    double total = 0.0;
    for (double v : row) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(total <= 1.0 + 1e-12);
  }
}

TEST_CASE("surrogate rejects prompts past its context") {
  gen::Rng rng(5);
  const Trace t = gen::short_trace(rng, 6, "big");
  try {
    SurrogateBackend(4).prefill(build_raw_prompt(t), 0.2);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::context_overflow);
  }
}

TEST_CASE("step means ignore context tokens") {
  const std::vector<double> v = {9.0, 1.0, 3.0, 9.0, 5.0};
  const std::vector<long> owner = {-1, 0, 0, -1, 2};
  const auto m = k::step_means(v, owner, 3);
  CHECK(m.mean == std::vector<double>{2.0, 0.0, 5.0});
  CHECK(m.count == std::vector<std::size_t>{2, 0, 1});
}

TEST_CASE("layer selection takes the last ceil(fraction * L) layers") {
  CHECK(select_attention_layers(28, 0.2).size() == 6);
  CHECK(select_attention_layers(30, 0.2).size() == 6);
  CHECK(select_attention_layers(1, 0.2) == std::vector<std::size_t>{0});
  CHECK(select_attention_layers(10, 1.0).front() == 0);
  CHECK(select_attention_layers(10, 0.25) == std::vector<std::size_t>{7, 8, 9});
}

TEST_CASE("whitespace tokenizer") {
  CHECK(whitespace_token_count("  a\tbb\n\nccc \f") == 3);
  const auto cut = whitespace_truncate("one two  three four", 2);
  CHECK(cut.prefix == "one two");
  CHECK(cut.truncated);
  const auto whole = whitespace_truncate("one two", 2);
  CHECK(whole.prefix == "one two");
  CHECK_FALSE(whole.truncated);
}

}
