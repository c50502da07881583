#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "emgtl/errors.hpp"
#include "emgtl/stats.hpp"
#include "support.hpp"

using namespace emgtl;

namespace {

double upper_normal(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("average ranks") {
    CHECK(average_ranks({10, 20, 20, 30}) == std::vector<double>{1, 2.5, 2.5, 4});
    CHECK(average_ranks({3, 1, 2}) == std::vector<double>{3, 1, 2});
    CHECK(average_ranks({5, 5, 5}) == std::vector<double>{2, 2, 2});
    CHECK(average_ranks({}).empty());
  }

  TEST_CASE("wilcoxon examples") {
    // every difference positive: W+ = 36, p = 1 / 2^8
    std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8}, b(8, 0.0);
    const StatResult r = wilcoxon_one_tail(a, b);
    CHECK(r.statistic == 36.0);
    CHECK(r.p_value == doctest::Approx(1.0 / 256.0));
    CHECK(r.exact);
    CHECK(r.reject_h0);
    const StatResult flipped = wilcoxon_one_tail(b, a);
    CHECK(flipped.statistic == 0.0);
    CHECK(flipped.p_value == doctest::Approx(1.0));
    CHECK_FALSE(flipped.reject_h0);

    const StatResult zero = wilcoxon_one_tail(a, a);
    CHECK(zero.degenerate);
    CHECK(zero.p_value == 1.0);
    CHECK_FALSE(zero.reject_h0);

    // zero differences are dropped before ranking
    const StatResult dropped = wilcoxon_one_tail({1, 5, 3, 9}, {1, 4, 1, 6});
    CHECK(dropped.n == 3);
    CHECK(dropped.small_sample);
    CHECK(dropped.statistic == 6.0);
    CHECK(dropped.p_value == doctest::Approx(1.0 / 8.0));
    CHECK_THROWS_AS(wilcoxon_one_tail({1, 2}, {1}), DataError);
  }

  TEST_CASE("exact p-values agree with sign enumeration") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> d(-6, 6);  // integer differences produce ties
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 3 + static_cast<std::size_t>(trial % 10);
      std::vector<double> a(n), b(n, 0.0);
      for (auto& x : a) x = d(rng);
      const StatResult r = wilcoxon_one_tail(a, b);
      if (r.degenerate) continue;
      REQUIRE(r.exact);
      REQUIRE(r.p_value == doctest::Approx(testing::enumerate_wilcoxon_p(r.ranks, r.statistic)).epsilon(1e-12));
      REQUIRE(wilcoxon_exact_p(r.ranks, r.statistic) == doctest::Approx(r.p_value).epsilon(1e-12));
    }
  }

  TEST_CASE("normal approximation tracks the exact distribution") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01(0.3, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> a(18), b(18, 0.0);
      for (auto& x : a) x = n01(rng);
      const StatResult r = wilcoxon_one_tail(a, b);
      CHECK_FALSE(r.exact);
      const double exact = testing::enumerate_wilcoxon_p(r.ranks, r.statistic);
      CHECK(std::abs(r.p_value - exact) < 0.01);
    }
  }

  TEST_CASE("friedman statistic and Holm post-hoc") {
    // 3 methods, df = 2: the chi-square tail is exp(-x / 2)
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t datasets = 6 + static_cast<std::size_t>(trial % 5);
      std::vector<std::vector<double>> table(datasets, std::vector<double>(3));
      for (auto& row : table)
        for (std::size_t m = 0; m < 3; ++m) row[m] = n01(rng) + 0.6 * static_cast<double>(m);
      const FriedmanResult r = friedman_holm(table);

      std::vector<double> mean_rank(3, 0.0);
      for (const auto& row : table)
        for (std::size_t m = 0; m < 3; ++m) {
          double rank = 1.0;
          for (std::size_t o = 0; o < 3; ++o) rank += row[o] > row[m] ? 1.0 : row[o] == row[m] && o != m ? 0.5 : 0.0;
          mean_rank[m] += rank / static_cast<double>(datasets);
        }
      for (std::size_t m = 0; m < 3; ++m) REQUIRE(r.mean_ranks[m] == doctest::Approx(mean_rank[m]));
      double ss = 0.0;
      for (double x : mean_rank) ss += x * x;
      const double n = static_cast<double>(datasets);
      const double chi = 12.0 * n / 12.0 * (ss - 3.0 * 16.0 / 4.0);
      REQUIRE(r.chi_square == doctest::Approx(chi).epsilon(1e-12));
      REQUIRE(r.p_value == doctest::Approx(std::exp(-chi / 2.0)).epsilon(1e-9));

      const std::size_t best = static_cast<std::size_t>(std::min_element(mean_rank.begin(), mean_rank.end()) - mean_rank.begin());
      REQUIRE(r.best == best);
      const double se = std::sqrt(3.0 * 4.0 / (6.0 * n));
      std::vector<double> p_raw;
      for (std::size_t k = 0; k < r.compared.size(); ++k) {
        const std::size_t m = r.compared[k];
        REQUIRE(m != best);
        const double z = (mean_rank[m] - mean_rank[best]) / se;
        REQUIRE(std::abs(r.z[k]) == doctest::Approx(std::abs(z)));
        REQUIRE(r.p_raw[k] == doctest::Approx(std::min(1.0, 2.0 * upper_normal(std::abs(z)))));
        p_raw.push_back(r.p_raw[k]);
      }
      // Holm with two hypotheses: smaller p doubled, larger kept (monotone)
      const double lo = std::min(p_raw[0], p_raw[1]), hi = std::max(p_raw[0], p_raw[1]);
      const double adj_lo = std::min(1.0, 2.0 * lo), adj_hi = std::max(adj_lo, hi);
      for (std::size_t k = 0; k < 2; ++k) {
        REQUIRE(r.p_holm[k] == doctest::Approx(p_raw[k] == lo ? adj_lo : adj_hi));
        REQUIRE(r.reject_holm[k] == (r.p_holm[k] < kAlpha));
      }
    }
  }

  TEST_CASE("Holm and Bonferroni adjustments") {
    const auto h = holm_adjust({0.01, 0.04, 0.03});
    CHECK(h[0] == doctest::Approx(0.03));
    CHECK(h[1] == doctest::Approx(0.06));
    CHECK(h[2] == doctest::Approx(0.06));
    CHECK(holm_adjust({0.5, 0.6}) == std::vector<double>{1.0, 1.0});
    CHECK(bonferroni(0.02, 3) == doctest::Approx(0.06));
    CHECK(bonferroni(0.5, 3) == 1.0);
    CHECK(bonferroni(std::vector<double>{0.01, 0.2}, 4) == std::vector<double>{0.04, 0.8});
    CHECK(bonferroni_threshold(0.05, 5) == doctest::Approx(0.01));

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> p(6);
      for (auto& x : p) x = u(rng);
      const auto adj = holm_adjust(p);
      const auto bon = bonferroni(p, p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        REQUIRE(adj[i] >= p[i]);
        REQUIRE(adj[i] <= bon[i] + 1e-15);
      }
    }
  }

  TEST_CASE("friedman input errors") {
    CHECK_THROWS_AS(friedman_holm({{1.0, 2.0}}), DataError);
    CHECK_THROWS_AS(friedman_holm({{1.0}, {2.0}}), DataError);
  }
}
