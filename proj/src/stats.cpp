#include "emgtl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "emgtl/errors.hpp"

namespace emgtl {

namespace {

constexpr std::size_t kExactLimit = 12;

double upper_normal(double z) { return boost::math::cdf(boost::math::complement(boost::math::normal(), z)); }

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus) {
  const std::size_t n = ranks.size();
  if (n > 30) throw ConfigError("exact signed-rank enumeration is limited to 30 pairs");
  std::size_t hits = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) w += ranks[i];
    if (w >= w_plus - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

StatResult wilcoxon_one_tail(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
  if (a.size() != b.size()) throw DataError("signed-rank test needs paired samples of equal length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diff.push_back(a[i] - b[i]);
  StatResult r;
  r.n = diff.size();
  if (diff.empty()) {
    r.degenerate = true;
    r.small_sample = true;
    return r;
  }
  r.small_sample = r.n < 5;
  std::vector<double> mag(diff.size());
  std::transform(diff.begin(), diff.end(), mag.begin(), [](double d) { return std::abs(d); });
  r.ranks = average_ranks(mag);
  for (std::size_t i = 0; i < diff.size(); ++i)
    if (diff[i] > 0.0) r.statistic += r.ranks[i];

  const double n = static_cast<double>(r.n);
  if (r.n <= kExactLimit) {
    r.exact = true;
    r.p_value = wilcoxon_exact_p(r.ranks, r.statistic);
  } else {
    double ties = 0.0;
    std::vector<double> sorted = r.ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      ties += t * t * t - t;
      i = j;
    }
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    r.p_value = var > 0.0 ? upper_normal((r.statistic - mean - 0.5) / std::sqrt(var)) : 1.0;
  }
  r.reject_h0 = r.p_value < alpha;
  return r;
}

std::vector<double> holm_adjust(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return p[i] < p[j]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - k) * p[order[k]]));
    adj[order[k]] = running;
  }
  return adj;
}

double bonferroni(double p, std::size_t m) {
  if (m == 0) throw ConfigError("bonferroni correction needs m >= 1");
  return std::min(1.0, static_cast<double>(m) * p);
}

std::vector<double> bonferroni(const std::vector<double>& p, std::size_t m) {
  std::vector<double> out;
  for (double v : p) out.push_back(bonferroni(v, m));
  return out;
}

double bonferroni_threshold(double alpha, std::size_t m) {
  if (m == 0) throw ConfigError("bonferroni correction needs m >= 1");
  return alpha / static_cast<double>(m);
}

FriedmanResult friedman_holm(const std::vector<std::vector<double>>& table, double alpha) {
  const std::size_t n = table.size();
  if (n < 2) throw DataError("Friedman test needs at least 2 datasets");
  const std::size_t k = table[0].size();
  if (k < 2) throw DataError("Friedman test needs at least 2 methods");
  FriedmanResult r;
  r.mean_ranks.assign(k, 0.0);
  for (const auto& row : table) {
    if (row.size() != k) throw DataError("Friedman table rows differ in length");
    std::vector<double> neg(k);
    std::transform(row.begin(), row.end(), neg.begin(), [](double v) { return -v; });
    const auto ranks = average_ranks(neg);
    for (std::size_t j = 0; j < k; ++j) r.mean_ranks[j] += ranks[j];
  }
  for (double& v : r.mean_ranks) v /= static_cast<double>(n);

  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  double sum_sq = 0.0;
  for (double v : r.mean_ranks) sum_sq += v * v;
  r.chi_square = std::max(0.0, 12.0 * nn / (kk * (kk + 1.0)) * (sum_sq - kk * (kk + 1.0) * (kk + 1.0) / 4.0));
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(kk - 1.0), r.chi_square));
  r.reject_h0 = r.p_value < alpha;

  r.best = static_cast<std::size_t>(std::min_element(r.mean_ranks.begin(), r.mean_ranks.end()) -
                                    r.mean_ranks.begin());
  const double se = std::sqrt(kk * (kk + 1.0) / (6.0 * nn));
  for (std::size_t j = 0; j < k; ++j) {
    if (j == r.best) continue;
    const double z = (r.mean_ranks[j] - r.mean_ranks[r.best]) / se;
    r.compared.push_back(j);
    r.z.push_back(z);
    r.p_raw.push_back(std::min(1.0, 2.0 * upper_normal(std::abs(z))));
  }
  r.p_holm = holm_adjust(r.p_raw);
  for (double p : r.p_holm) r.reject_holm.push_back(p < alpha);
  return r;
}

}  // namespace emgtl
