#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "prism/wilcoxon.hpp"

using namespace prism::stats;

TEST_SUITE("wilcoxon") {

TEST_CASE("three positive differences give one in eight") {
  const std::vector<double> d = {1, 2, 3};
  const auto r = wilcoxon_greater(d);
  CHECK(r.exact);
  CHECK(r.w_plus == 6.0);
  CHECK(r.p_value == 0.125);
}

TEST_CASE("exact p matches sign-pattern enumeration for n up to 10") {
  gen::Rng rng(55);
  for (std::size_t n = 1; n <= 10; ++n) {
    for (int round = 0; round < 40; ++round) {
      std::vector<double> d(n);
      for (auto& x : d) {
        // Small integer grid: ties and zeros are common.
        x = static_cast<double>(static_cast<long>(rng.below(9)) - 3);
      }
      const double want = oracle::wilcoxon_enumerated(d);
      const auto got = wilcoxon_greater(d);
      if (got.degenerate) {
        CHECK(want == 1.0);
        continue;
      }
      CHECK(got.exact);
      CHECK(got.p_value == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("zeros are dropped and all-zero input is degenerate") {
  const std::vector<double> d = {0, 0, 2, -1, 0};
  const auto r = wilcoxon_greater(d);
  CHECK(r.n_used == 2);
  CHECK(r.n_zero == 3);
  const std::vector<double> z = {0, 0};
  const auto dz = wilcoxon_greater(z);
  CHECK(dz.degenerate);
  CHECK(dz.p_value == 1.0);
}

TEST_CASE("tied magnitudes share their average rank") {
  const std::vector<double> d = {-2, 1, 2, 0, 3};
  const auto sr = signed_ranks(d);
  CHECK(sr.ranks == std::vector<double>{2.5, 1.0, 2.5, 4.0});
  CHECK(sr.signs == std::vector<int>{-1, 1, 1, 1});
}

TEST_CASE("normal approximation stays within 0.01 of exact at n = 20") {
  gen::Rng rng(56);
  double worst = 0.0;
  for (int round = 0; round < 100; ++round) {
    std::vector<double> d(20);
    for (auto& x : d) x = rng.uniform(-1.0, 1.5);
    worst = std::max(worst, std::fabs(wilcoxon_normal_p_greater(d) - wilcoxon_exact_p_greater(d)));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("large samples switch to the approximation") {
  std::vector<double> d(40);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i % 7) - 2.0;
  const auto r = wilcoxon_greater(d);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
}

TEST_CASE("p-values are ordered by how positive the sample is") {
  const std::vector<double> pos = {1, 2, 3, 4, 5, 6};
  const std::vector<double> mixed = {1, -2, 3, -4, 5, 6};
  const std::vector<double> neg = {-1, -2, -3, -4, -5, -6};
  CHECK(wilcoxon_greater(pos).p_value < wilcoxon_greater(mixed).p_value);
  CHECK(wilcoxon_greater(mixed).p_value < wilcoxon_greater(neg).p_value);
  CHECK(wilcoxon_greater(neg).p_value == 1.0);
  CHECK(wilcoxon_greater(pos).p_value == 1.0 / 64.0);
}

}
