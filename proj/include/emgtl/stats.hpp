#pragma once

#include <string>
#include <vector>

namespace emgtl {

inline constexpr double kAlpha = 0.05;

struct StatResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject_h0 = false;  // p_value < alpha
  std::vector<double> ranks;
  std::size_t n = 0;  // pairs left after dropping zero differences
  bool exact = false;
  bool degenerate = false;  // every difference zero
  bool small_sample = false;  // fewer than 5 non-zero differences
};

/// Average ranks (1-based) of `values`, ascending.
std::vector<double> average_ranks(const std::vector<double>& values);

/// One-tailed signed-rank test of "a > b". Zero differences are dropped,
/// ties get average ranks; exact enumeration up to 12 pairs, otherwise the
/// normal approximation with continuity and tie corrections. The statistic is
/// the positive rank sum W+.
StatResult wilcoxon_one_tail(const std::vector<double>& a, const std::vector<double>& b, double alpha = kAlpha);

/// Upper-tail exact p of W+ for the given ranks (all 2^n sign patterns).
double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus);

struct FriedmanResult {
  std::vector<double> mean_ranks;  // per method, rank 1 = best (highest score)
  double chi_square = 0.0;
  double p_value = 1.0;
  bool reject_h0 = false;
  std::size_t best = 0;  // lowest mean rank, first on ties
  // comparisons of every other method against `best`, in method order
  std::vector<std::size_t> compared;
  std::vector<double> z;
  std::vector<double> p_raw;
  std::vector<double> p_holm;
  std::vector<bool> reject_holm;
};

/// `table[d][m]` is the score of method m on dataset d (higher is better).
FriedmanResult friedman_holm(const std::vector<std::vector<double>>& table, double alpha = kAlpha);

/// Holm step-down adjusted p-values, in input order.
std::vector<double> holm_adjust(const std::vector<double>& p);
std::vector<double> bonferroni(const std::vector<double>& p, std::size_t m);
double bonferroni(double p, std::size_t m);
/// Per-comparison threshold alpha / m.
double bonferroni_threshold(double alpha, std::size_t m);

}  // namespace emgtl
