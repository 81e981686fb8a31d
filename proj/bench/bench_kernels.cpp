// Serial vs OpenMP timings of the token-to-step aggregation kernels.
//   prism_bench [--smoke] [--tokens N] [--steps S] [--reps R]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prism/kernels.hpp"

namespace k = prism::kernels;

namespace {

struct Args {
  std::size_t tokens = 4000;
  std::size_t steps = 60;
  int reps = 3;
};

double seconds(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

double max_diff(const prism::StepAttention& a, const prism::StepAttention& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      worst = std::max(worst, std::fabs(a[i][j] - b[i][j]) / std::max(1.0, std::fabs(a[i][j])));
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  Args args;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--smoke") {
      args.tokens = 400;
      args.steps = 12;
      args.reps = 1;
    } else if (a == "--tokens" && i + 1 < argc) {
      args.tokens = std::stoul(argv[++i]);
    } else if (a == "--steps" && i + 1 < argc) {
      args.steps = std::stoul(argv[++i]);
    } else if (a == "--reps" && i + 1 < argc) {
      args.reps = std::stoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: prism_bench [--smoke] [--tokens N] [--steps S] [--reps R]\n");
      return 4;
    }
  }

  std::mt19937_64 rng(7);
  std::vector<std::string> words(args.tokens);
  for (auto& w : words) w = "w" + std::to_string(rng() % 500);
  std::vector<std::string_view> views(words.begin(), words.end());
  std::vector<long> owner(args.tokens);
  for (std::size_t t = 0; t < args.tokens; ++t)
    owner[t] = t < 20 ? -1 : static_cast<long>((t - 20) * args.steps / (args.tokens - 20));

  std::vector<std::vector<double>> alpha(args.tokens);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < args.tokens; ++t) {
    alpha[t].resize(t + 1);
    for (auto& v : alpha[t]) v = u(rng);
  }

  std::printf("threads=%d tokens=%zu steps=%zu\n", k::max_threads(), args.tokens, args.steps);
  int status = 0;

  prism::StepAttention s1, p1;
  const double ts1 = seconds([&] { s1 = k::surrogate_step_attention(views, owner, args.steps, k::Exec::serial); }, args.reps);
  const double tp1 = seconds([&] { p1 = k::surrogate_step_attention(views, owner, args.steps, k::Exec::parallel); }, args.reps);
  const double d1 = max_diff(s1, p1);
  std::printf("surrogate_step_attention  serial %.4fs  parallel %.4fs  speedup %.2fx  max rel diff %.3g\n", ts1, tp1,
              ts1 / tp1, d1);

  prism::StepAttention s2, p2;
  const double ts2 = seconds([&] { s2 = k::step_attention_from_tokens(alpha, owner, args.steps, k::Exec::serial); }, args.reps);
  const double tp2 = seconds([&] { p2 = k::step_attention_from_tokens(alpha, owner, args.steps, k::Exec::parallel); }, args.reps);
  const double d2 = max_diff(s2, p2);
  std::printf("step_attention_from_tokens serial %.4fs  parallel %.4fs  speedup %.2fx  max rel diff %.3g\n", ts2, tp2,
              ts2 / tp2, d2);

  if (d1 > 1e-12 || d2 > 1e-12) {
    std::printf("serial and parallel results disagree\n");
    status = 1;
  }
  return status;
}
