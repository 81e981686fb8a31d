#include "prism/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace prism::stats {

SignedRanks signed_ranks(std::span<const double> deltas) {
  std::vector<double> mags;
  SignedRanks out;
  for (double d : deltas) {
    if (d == 0.0) continue;
    mags.push_back(std::fabs(d));
    out.signs.push_back(d > 0.0 ? 1 : -1);
  }
  const std::size_t n = mags.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mags[a] < mags[b]; });
  out.ranks.assign(n, 0.0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && mags[order[j + 1]] == mags[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) out.ranks[order[t]] = avg;
    i = j + 1;
  }
  return out;
}

namespace {

double clamp_p(double p) {
  if (!(p > 0.0)) return std::numeric_limits<double>::min();
  return std::min(p, 1.0);
}

double w_plus_of(const SignedRanks& sr) {
  double w = 0.0;
  for (std::size_t i = 0; i < sr.ranks.size(); ++i)
    if (sr.signs[i] > 0) w += sr.ranks[i];
  return w;
}

// Sign-flip distribution of the doubled rank sum, which stays integral when
// ties produce half ranks.
double exact_upper(const SignedRanks& sr, double w_plus) {
  const std::size_t n = sr.ranks.size();
  if (n == 0) return 1.0;
  std::vector<long> doubled(n);
  long total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    doubled[i] = std::lround(sr.ranks[i] * 2.0);
    total += doubled[i];
  }
  std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
  ways[0] = 1.0;
  long reach = 0;
  for (long r : doubled) {
    for (long s = reach; s >= 0; --s) {
      if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
    }
    reach += r;
  }
  const long observed = std::lround(w_plus * 2.0);
  double tail = 0.0;
  for (long s = std::max(observed, 0L); s <= total; ++s) tail += ways[static_cast<std::size_t>(s)];
  return clamp_p(tail / std::ldexp(1.0, static_cast<int>(n)));
}

double normal_upper(const SignedRanks& sr, double w_plus) {
  const auto n = static_cast<double>(sr.ranks.size());
  if (sr.ranks.empty()) return 1.0;
  const double mean = n * (n + 1.0) / 4.0;
  double tie_term = 0.0;
  std::vector<double> r = sr.ranks;
  std::sort(r.begin(), r.end());
  for (std::size_t i = 0; i < r.size();) {
    std::size_t j = i;
    while (j + 1 < r.size() && r[j + 1] == r[i]) ++j;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double z = (w_plus - mean - 0.5) / std::sqrt(var);
  return clamp_p(0.5 * std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

double wilcoxon_exact_p_greater(std::span<const double> deltas) {
  const auto sr = signed_ranks(deltas);
  return exact_upper(sr, w_plus_of(sr));
}

double wilcoxon_normal_p_greater(std::span<const double> deltas) {
  const auto sr = signed_ranks(deltas);
  return normal_upper(sr, w_plus_of(sr));
}

WilcoxonResult wilcoxon_greater(std::span<const double> deltas, std::size_t exact_max_n) {
  WilcoxonResult out;
  const auto sr = signed_ranks(deltas);
  out.n_used = sr.ranks.size();
  out.n_zero = deltas.size() - out.n_used;
  out.w_plus = w_plus_of(sr);
  if (out.n_used == 0) {
    out.degenerate = true;
    out.p_value = 1.0;
    return out;
  }
  out.exact = out.n_used <= exact_max_n;
  out.p_value = out.exact ? exact_upper(sr, out.w_plus) : normal_upper(sr, out.w_plus);
  return out;
}

}  // namespace prism::stats
