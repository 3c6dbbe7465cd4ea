#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tsc {

double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// 1-based ranks; tied values share their average rank. Ascending order
/// ranks the smallest value 1, descending the largest.
std::vector<double> average_ranks(std::span<const double> values, bool descending = false);

/// Pearson correlation of the average ranks.
double spearman_rho(std::span<const double> a, std::span<const double> b);

/// Accuracies: one row per dataset, one column per classifier.
struct ResultsTable {
  std::vector<std::string> datasets;
  std::vector<std::string> classifiers;
  std::vector<std::vector<double>> values;  // [dataset][classifier]

  void validate() const;
  std::vector<double> column(std::size_t classifier) const;

  /// Header `dataset,<clf1>,<clf2>,...`.
  static ResultsTable read_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;
};

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int df = 0;
  /// Mean over datasets of each classifier's rank (1 = most accurate).
  std::vector<double> average_ranks;
};

/// Chi-square approximation 12N / (k(k+1)) * (sum R_j^2 - k(k+1)^2 / 4)
/// with k - 1 degrees of freedom.
FriedmanResult friedman_test(const ResultsTable& table);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, int df);

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  int n = 0;  // non-zero differences
  double p_value = 1.0;
  bool exact = true;
  /// Fewer than 6 non-zero differences.
  bool low_power = false;
};

/// Differences below this magnitude count as zero, and absolute
/// differences closer than it count as ties.
inline constexpr double kDifferenceTolerance = 1e-12;
inline constexpr int kExactWilcoxonMax = 20;

/// Two-sided signed-rank test on x - y. Zero differences are dropped. Up to
/// 20 pairs the exact null distribution gives p = min(1, 2 P(W+ <= min(W+, W-)));
/// above that a normal approximation with tie and continuity corrections.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

/// Holm step-down over `p_values`: flags which hypotheses are rejected.
std::vector<bool> holm_reject(std::span<const double> p_values, double alpha);
/// Holm-adjusted p-values (monotone, capped at 1).
std::vector<double> holm_adjust(std::span<const double> p_values);

struct PairComparison {
  std::string a;
  std::string b;
  WilcoxonResult test;
  double adjusted_p = 1.0;
  bool significant = false;
};

struct ComparisonReport {
  std::vector<std::string> classifiers;
  std::vector<double> average_ranks;
  FriedmanResult friedman;
  double alpha = 0.05;
  std::vector<PairComparison> pairs;
  /// Maximal runs of the rank ordering with no significant pair inside.
  std::vector<std::vector<std::string>> cliques;

  std::string to_text() const;
  void write_csv(const std::filesystem::path& pairs_path, const std::filesystem::path& ranks_path) const;
};

/// Pairwise Wilcoxon tests over all classifier pairs with Holm's
/// correction, plus the Friedman test and rank-ordered cliques.
ComparisonReport wilcoxon_holm(const ResultsTable& table, double alpha = 0.05);

}  // namespace tsc
