#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "temp_dir.hpp"
#include "tsc/error.hpp"
#include "tsc/rng.hpp"
#include "tsc/stats.hpp"

using namespace tsc;
using tsc::testing::read_file;
using tsc::testing::TempDir;

namespace {

/// Two-sided p by listing all 2^n sign assignments of the observed
/// absolute differences, ranks recomputed from scratch.
double enumerated_p(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i] - y[i]) > 1e-12) d.push_back(x[i] - y[i]);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double gap = std::abs(d[j]) - std::abs(d[i]);
      if (std::abs(gap) <= 1e-12) {
        ++equal;
      } else if (gap < 0) {
        ++below;
      }
    }
    rank[i] = below + (equal + 1) / 2;
  }
  double w_plus = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) w_plus += rank[i];
  }
  const double observed = std::min(w_plus, total - w_plus);
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) w += rank[i];
    }
    hits += w <= observed + 1e-9;
  }
  return std::min(1.0, 2.0 * static_cast<double>(hits) / std::ldexp(1.0, static_cast<int>(n)));
}

ResultsTable table_of(std::vector<std::vector<double>> values, std::vector<std::string> classifiers) {
  ResultsTable t;
  t.classifiers = std::move(classifiers);
  t.values = std::move(values);
  for (std::size_t i = 0; i < t.values.size(); ++i) t.datasets.push_back("d" + std::to_string(i));
  return t;
}

ResultsTable random_table(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> v(rows, std::vector<double>(cols));
  for (auto& r : v) {
    for (auto& x : r) x = std::round(rng.uniform(0.5, 1.0) * 100) / 100;
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < cols; ++j) names.push_back("c" + std::to_string(j));
  return table_of(std::move(v), std::move(names));
}

}  // namespace

TEST(Accuracy, CountsMatches) {
  const std::vector<int> p{0, 1, 1, 2}, y{0, 1, 2, 2};
  EXPECT_DOUBLE_EQ(accuracy(p, y), 0.75);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
  EXPECT_THROW(accuracy(p, std::vector<int>{0}), DataError);
}

TEST(Ranks, AverageTies) {
  const std::vector<double> v{0.9, 0.7, 0.9, 0.5};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 2, 3.5, 1}));
  EXPECT_EQ(average_ranks(v, true), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(Spearman, Examples) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(spearman_rho(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(a, std::vector<double>{4, 3, 2, 1}), -1.0);
  // 1 - 6 * (0 + 1 + 1 + 0) / (4 * 15).
  EXPECT_NEAR(spearman_rho(a, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_THROW(spearman_rho(std::vector<double>{}, std::vector<double>{}), DataError);
  EXPECT_THROW(spearman_rho(a, std::vector<double>{1, 2}), DataError);
}

TEST(Spearman, BoundedAndInvariantToMonotoneMaps) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = std::round(rng.uniform(0, 5));
    for (auto& x : b) x = rng.uniform(-1, 1);
    if (std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end()) continue;
    const double rho = spearman_rho(a, b);
    EXPECT_GE(rho, -1.0 - 1e-12);
    EXPECT_LE(rho, 1.0 + 1e-12);
    std::vector<double> c(b);
    for (auto& x : c) x = std::exp(3 * x);
    EXPECT_NEAR(spearman_rho(a, c), rho, 1e-12);
  }
}

TEST(Friedman, DominantClassifierHandComputed) {
  std::vector<std::vector<double>> v;
  for (int i = 0; i < 10; ++i) v.push_back(i % 2 ? std::vector<double>{0.9, 0.8, 0.7} : std::vector<double>{0.9, 0.7, 0.8});
  const FriedmanResult r = friedman_test(table_of(v, {"a", "b", "c"}));
  // Ranks 1, 2.5, 2.5: 12*10/12 * (1 + 6.25 + 6.25 - 12) = 15.
  EXPECT_NEAR(r.statistic, 15.0, 1e-12);
  EXPECT_EQ(r.df, 2);
  EXPECT_NEAR(r.p_value, std::exp(-7.5), 1e-15);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_EQ(r.average_ranks, (std::vector<double>{1.0, 2.5, 2.5}));
}

TEST(Friedman, IdenticalColumns) {
  const FriedmanResult r = friedman_test(table_of({{0.5, 0.5, 0.5}, {0.8, 0.8, 0.8}, {1, 1, 1}}, {"a", "b", "c"}));
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Friedman, TwoClassifiersMatchSignTestChiSquare) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng.index(20);
    std::vector<std::vector<double>> v;
    double wins = 0, losses = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(0, 1), b = rng.uniform(0, 1);
      (a > b ? wins : losses) += 1;
      v.push_back({a, b});
    }
    const FriedmanResult r = friedman_test(table_of(v, {"a", "b"}));
    const double sign_stat = (wins - losses) * (wins - losses) / static_cast<double>(n);
    EXPECT_NEAR(r.statistic, sign_stat, 1e-9);
    EXPECT_NEAR(r.p_value, std::erfc(std::sqrt(sign_stat / 2)), 1e-12);
    // Fewer losses means a smaller p-value.
  }
}

TEST(Friedman, RanksAverageToMidpointAndIgnoreMonotoneMaps) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + rng.index(5);
    ResultsTable t = random_table(rng, 8, k);
    const FriedmanResult r = friedman_test(t);
    const double mean = std::accumulate(r.average_ranks.begin(), r.average_ranks.end(), 0.0) / static_cast<double>(k);
    EXPECT_NEAR(mean, (static_cast<double>(k) + 1) / 2, 1e-12);
    for (auto& row : t.values) {
      const double shift = rng.uniform(-0.2, 0.2);
      for (auto& x : row) x = (std::pow(x, 3) + shift) * 0.5 + 0.25;
    }
    const FriedmanResult s = friedman_test(t);
    EXPECT_NEAR(s.statistic, r.statistic, 1e-9);
    EXPECT_NEAR(s.p_value, r.p_value, 1e-12);
  }
}

TEST(Friedman, ChiSquareTailAgainstClosedForms) {
  for (double x : {0.1, 1.0, 3.84, 10.0, 30.0}) {
    EXPECT_NEAR(chi_square_sf(x, 1), std::erfc(std::sqrt(x / 2)), 1e-14);
    EXPECT_NEAR(chi_square_sf(x, 2), std::exp(-x / 2), 1e-14);
    EXPECT_NEAR(chi_square_sf(x, 4), std::exp(-x / 2) * (1 + x / 2), 1e-14);
  }
  EXPECT_EQ(chi_square_sf(0.0, 3), 1.0);
  EXPECT_THROW(chi_square_sf(1.0, 0), UsageError);
  EXPECT_THROW(friedman_test(table_of({{0.5, 0.6}}, {"a", "b"})), DataError);
}

TEST(Wilcoxon, ConstantShiftOnTwelveDatasets) {
  std::vector<double> b{0.5, 0.55, 0.6, 0.62, 0.64, 0.7, 0.71, 0.72, 0.75, 0.8, 0.85, 0.88};
  std::vector<double> a(b);
  for (auto& x : a) x += 0.1;
  const WilcoxonResult r = wilcoxon_signed_rank(a, b);
  EXPECT_EQ(r.n, 12);
  EXPECT_EQ(r.w_minus, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.p_value, 2.0 / 4096.0, 1e-15);
  const ComparisonReport rep = wilcoxon_holm(table_of([&] {
    std::vector<std::vector<double>> v;
    for (std::size_t i = 0; i < 12; ++i) v.push_back({a[i], b[i]});
    return v;
  }(), {"A", "B"}));
  ASSERT_EQ(rep.pairs.size(), 1u);
  EXPECT_TRUE(rep.pairs[0].significant);
  EXPECT_EQ(rep.cliques, (std::vector<std::vector<std::string>>{{"A"}, {"B"}}));
}

TEST(Wilcoxon, ExactTailMatchesEnumeration) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(10);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so zeros and tied magnitudes occur often.
      x[i] = std::round(rng.uniform(0, 10)) / 10;
      y[i] = std::round(rng.uniform(0, 10)) / 10;
    }
    const WilcoxonResult r = wilcoxon_signed_rank(x, y);
    EXPECT_NEAR(r.p_value, enumerated_p(x, y), 1e-12) << trial;
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    EXPECT_EQ(r.low_power, r.n < 6);
  }
}

TEST(Wilcoxon, ZerosDroppedAndNormalTailAboveTwenty) {
  const std::vector<double> same{0.1, 0.2, 0.3};
  const WilcoxonResult z = wilcoxon_signed_rank(same, same);
  EXPECT_EQ(z.n, 0);
  EXPECT_EQ(z.p_value, 1.0);
  EXPECT_TRUE(z.low_power);

  std::vector<double> x(25), y(25, 0.0);
  for (std::size_t i = 0; i < 25; ++i) x[i] = 0.01 * static_cast<double>(i + 1) * (i % 5 == 0 ? -1 : 1);
  const WilcoxonResult r = wilcoxon_signed_rank(x, y);
  EXPECT_FALSE(r.exact);
  // Ranks 1..25; negatives at ranks 1, 6, 11, 16, 21.
  EXPECT_DOUBLE_EQ(r.w_minus, 55.0);
  const double mean = 25 * 26 / 4.0, sd = std::sqrt(25 * 26 * 51 / 24.0);
  EXPECT_NEAR(r.p_value, std::erfc((mean - 55.0 - 0.5) / sd / std::sqrt(2.0)), 1e-14);
}

TEST(Holm, StepDown) {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.005};
  // Sorted: 0.005 vs 0.0125, 0.01 vs 0.0167, 0.03 vs 0.025 stops.
  EXPECT_EQ(holm_reject(p, 0.05), (std::vector<bool>{true, false, false, true}));
  const auto adj = holm_adjust(p);
  EXPECT_NEAR(adj[3], 0.02, 1e-15);
  EXPECT_NEAR(adj[0], 0.03, 1e-15);
  EXPECT_NEAR(adj[2], 0.06, 1e-15);
  EXPECT_NEAR(adj[1], 0.06, 1e-15);
  // Smallest p faces alpha / m.
  EXPECT_EQ(holm_reject(std::vector<double>{0.0126, 0.9, 0.9, 0.9}, 0.05)[0], false);
  EXPECT_EQ(holm_reject(std::vector<double>{0.0125, 0.9, 0.9, 0.9}, 0.05)[0], true);
}

TEST(Holm, RejectionsMonotoneInAlphaAndConsistentWithAdjusted) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(1 + rng.index(10));
    for (auto& v : p) v = std::pow(rng.uniform(), 3);
    const auto adj = holm_adjust(p);
    std::vector<bool> previous(p.size(), false);
    for (double alpha : {0.001, 0.01, 0.05, 0.1, 0.5}) {
      const auto rej = holm_reject(p, alpha);
      for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_GE(rej[i], previous[i]);
        EXPECT_EQ(rej[i], adj[i] <= alpha) << trial;
      }
      previous = rej;
    }
  }
}

TEST(Compare, IdenticalColumnsFormOneClique) {
  const ComparisonReport rep =
      wilcoxon_holm(table_of({{0.7, 0.7, 0.7}, {0.8, 0.8, 0.8}, {0.9, 0.9, 0.9}}, {"x", "y", "z"}));
  for (const auto& pc : rep.pairs) EXPECT_FALSE(pc.significant);
  ASSERT_EQ(rep.cliques.size(), 1u);
  EXPECT_EQ(rep.cliques[0].size(), 3u);
}

TEST(Compare, SignificanceMonotoneInAlphaAndDeterministic) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    ResultsTable t = random_table(rng, 15, 4);
    for (auto& row : t.values) row[0] = std::min(1.0, row[0] + 0.2);
    std::vector<bool> previous;
    for (double alpha : {0.01, 0.05, 0.1, 0.3}) {
      const ComparisonReport rep = wilcoxon_holm(t, alpha);
      for (std::size_t i = 0; i < previous.size(); ++i) EXPECT_GE(rep.pairs[i].significant, previous[i]);
      previous.clear();
      for (const auto& pc : rep.pairs) previous.push_back(pc.significant);
      EXPECT_EQ(rep.to_text(), wilcoxon_holm(t, alpha).to_text());
    }
  }
}

TEST(Compare, CliquesHaveNoSignificantInsidePair) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    ResultsTable t = random_table(rng, 20, 5);
    for (auto& row : t.values) {
      for (std::size_t j = 0; j < 5; ++j) row[j] = std::min(1.0, row[j] * 0.5 + 0.1 * static_cast<double>(j));
    }
    const ComparisonReport rep = wilcoxon_holm(t, 0.05);
    const auto sig = [&](const std::string& a, const std::string& b) {
      for (const auto& pc : rep.pairs) {
        if ((pc.a == a && pc.b == b) || (pc.a == b && pc.b == a)) return pc.significant;
      }
      ADD_FAILURE() << "missing pair";
      return false;
    };
    std::set<std::string> covered;
    for (const auto& c : rep.cliques) {
      for (std::size_t i = 0; i < c.size(); ++i) {
        covered.insert(c[i]);
        for (std::size_t j = i + 1; j < c.size(); ++j) EXPECT_FALSE(sig(c[i], c[j]));
      }
    }
    EXPECT_EQ(covered.size(), 5u);
  }
}

TEST(Compare, RejectsBadAlphaAndTables) {
  const ResultsTable t = table_of({{0.5, 0.6}, {0.7, 0.8}}, {"a", "b"});
  EXPECT_THROW(wilcoxon_holm(t, 0.0), UsageError);
  EXPECT_THROW(wilcoxon_holm(t, 1.0), UsageError);
  ResultsTable bad = t;
  bad.values[1][0] = 1.2;
  EXPECT_THROW(bad.validate(), DataError);
  bad = t;
  bad.values[1].pop_back();
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(ResultsTableCsv, RoundTripAndReportFiles) {
  TempDir dir;
  const auto path = dir.write("results.csv", "dataset,fcn,resnet\nGunPoint,1,0.993\nCoffee,0.964,1\nBeef,0.7,0.767\n");
  const ResultsTable t = ResultsTable::read_csv(path);
  EXPECT_EQ(t.classifiers, (std::vector<std::string>{"fcn", "resnet"}));
  EXPECT_EQ(t.datasets, (std::vector<std::string>{"GunPoint", "Coffee", "Beef"}));
  EXPECT_EQ(t.column(1), (std::vector<double>{0.993, 1, 0.767}));
  t.write_csv(dir / "copy.csv");
  EXPECT_EQ(read_file(dir / "copy.csv"), read_file(path));

  const ComparisonReport rep = wilcoxon_holm(t);
  rep.write_csv(dir / "pairs.csv", dir / "ranks.csv");
  EXPECT_EQ(read_file(dir / "ranks.csv"), "classifier,average_rank\nfcn,1.6666666666666667\nresnet,1.3333333333333333\n");
  EXPECT_EQ(read_file(dir / "pairs.csv").substr(0, 9), "a,b,n,w_p");
  EXPECT_NE(rep.to_text().find("low-power"), std::string::npos);

  dir.write("bad.csv", "dataset,a\nx,0.5,0.6\n");
  EXPECT_THROW(ResultsTable::read_csv(dir / "bad.csv"), DataError);
  dir.write("empty.csv", "");
  EXPECT_THROW(ResultsTable::read_csv(dir / "empty.csv"), DataError);
  EXPECT_THROW(ResultsTable::read_csv(dir / "missing.csv"), DataError);
}
