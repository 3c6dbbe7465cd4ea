#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <numeric>

#include "temp_dir.hpp"
#include "tsc/elastic.hpp"
#include "tsc/error.hpp"

using namespace tsc;
using namespace tsc::align;
using tsc::testing::TempDir;

namespace {

TimeSeries random_series(Rng& rng, std::size_t dims, std::size_t length) {
  TimeSeries s(dims, length);
  for (double& v : s.values()) v = rng.uniform(-2.0, 2.0);
  return s;
}

/// Minimum cost over every admissible warping path, by exhaustive recursion.
/// Costs accumulate from (0, 0) forward, the same summation order as the
/// DP, so the two agree exactly.
double brute_force_dtw(const TimeSeries& a, const TimeSeries& b, std::size_t i = 0, std::size_t j = 0,
                       double prefix = 0.0) {
  const double here = prefix + pointwise_cost(a, i, b, j);
  const std::size_t m = a.length(), n = b.length();
  if (i == m - 1 && j == n - 1) return here;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < m && j + 1 < n) best = std::min(best, brute_force_dtw(a, b, i + 1, j + 1, here));
  if (i + 1 < m) best = std::min(best, brute_force_dtw(a, b, i + 1, j, here));
  if (j + 1 < n) best = std::min(best, brute_force_dtw(a, b, i, j + 1, here));
  return best;
}

void expect_valid_path(const WarpingPath& p, std::size_t m, std::size_t n) {
  ASSERT_FALSE(p.points.empty());
  EXPECT_EQ(p.points.front(), (PathPoint{0, 0}));
  EXPECT_EQ(p.points.back(), (PathPoint{m - 1, n - 1}));
  for (std::size_t k = 1; k < p.points.size(); ++k) {
    const std::size_t di = p.points[k].i - p.points[k - 1].i, dj = p.points[k].j - p.points[k - 1].j;
    EXPECT_LE(di, 1u);
    EXPECT_LE(dj, 1u);
    EXPECT_GT(di + dj, 0u);
  }
}

LabeledDataset toy_dataset(const std::string& name, Rng& rng, int classes, std::size_t per_class, std::size_t length) {
  LabeledDataset ds;
  ds.name = name;
  ds.n_classes = classes;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      ds.series.push_back(random_series(rng, 1, length));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace

TEST(Dtw, SelfDistanceIsZeroOnDiagonal) {
  Rng rng(1);
  const TimeSeries x = random_series(rng, 2, 9);
  const WarpingPath p = dtw(x, x);
  EXPECT_EQ(p.cost, 0.0);
  ASSERT_EQ(p.points.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(p.points[k], (PathPoint{k, k}));
}

TEST(Dtw, RepeatIsAbsorbed) {
  const TimeSeries a(std::vector<double>{0, 0, 1}), b(std::vector<double>{0, 1});
  EXPECT_EQ(dtw_cost(a, b), 0.0);
  const WarpingPath p = dtw(a, b);
  EXPECT_EQ(p.points, (std::vector<PathPoint>{{0, 0}, {1, 0}, {2, 1}}));
}

TEST(Dtw, DependentMultivariateCellCost) {
  const TimeSeries a(2, std::vector<double>{1, 0}), b(2, std::vector<double>{4, 4});
  // one timestamp each: (1-4)^2 + (0-4)^2
  EXPECT_EQ(dtw_cost(a, b), 25.0);
}

TEST(Dtw, ErrorsOnEmptyOrMismatchedDims) {
  EXPECT_THROW(dtw_cost(TimeSeries(), TimeSeries(std::vector<double>{1})), DataError);
  EXPECT_THROW(dtw_cost(TimeSeries(2, 3), TimeSeries(1, 3)), DataError);
}

TEST(Dtw, MatchesBruteForceEnumeration) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.index(2);
    const TimeSeries a = random_series(rng, d, 1 + rng.index(6));
    const TimeSeries b = random_series(rng, d, 1 + rng.index(6));
    const WarpingPath p = dtw(a, b);
    EXPECT_EQ(p.cost, brute_force_dtw(a, b)) << "trial " << trial;
    EXPECT_EQ(dtw_cost(a, b), p.cost);
    expect_valid_path(p, a.length(), b.length());
    double along = 0.0;
    for (const auto& pt : p.points) along += pointwise_cost(a, pt.i, b, pt.j);
    EXPECT_NEAR(along, p.cost, 1e-12);
  }
}

TEST(Dtw, Symmetric) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const TimeSeries a = random_series(rng, 1, 3 + rng.index(20));
    const TimeSeries b = random_series(rng, 1, 3 + rng.index(20));
    EXPECT_NEAR(dtw_cost(a, b), dtw_cost(b, a), 1e-9);
  }
}

TEST(Medoid, Examples) {
  Rng rng(3);
  const TimeSeries x = random_series(rng, 1, 8);
  TimeSeries y = x;
  for (double& v : y.values()) v += 50.0;
  const std::vector<TimeSeries> single{x};
  EXPECT_EQ(medoid(single), x);
  const std::vector<TimeSeries> set{x, x, y};
  EXPECT_EQ(medoid_index(set), 0u);
}

TEST(Medoid, MatchesBruteForceRowSums) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TimeSeries> set;
    for (int i = 0; i < 4; ++i) set.push_back(random_series(rng, 1, 3 + rng.index(6)));
    std::size_t best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += brute_force_dtw(set[i], set[j]);
      if (s < best_sum) {
        best_sum = s;
        best = i;
      }
    }
    EXPECT_EQ(medoid_index(set), best);
  }
}

TEST(Dba, SingletonAndCopiesAreFixedPoints) {
  Rng rng(4);
  const TimeSeries x = random_series(rng, 2, 12);
  const std::vector<TimeSeries> one{x};
  EXPECT_EQ(dba(one, 3), x);
  const std::vector<TimeSeries> copies{x, x, x, x};
  EXPECT_EQ(dba(copies), x);
}

TEST(Dba, KeepsInitLengthAndRejectsEmptySets) {
  Rng rng(5);
  const std::vector<TimeSeries> set{random_series(rng, 1, 10), random_series(rng, 1, 14)};
  EXPECT_EQ(dba(set, random_series(rng, 1, 7)).length(), 7u);
  EXPECT_THROW(dba(std::vector<TimeSeries>{}), DataError);
  EXPECT_THROW(dba(set, set[0], 0), UsageError);
}

TEST(Dba, LossIsNonIncreasing) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TimeSeries> set;
    const std::size_t n = 1 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) set.push_back(random_series(rng, 1, 2 + rng.index(19)));
    const auto trace = dba_loss_trace(set, medoid(set), 10);
    ASSERT_EQ(trace.size(), 11u);
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1]) << "trial " << trial;
    EXPECT_EQ(trace.back(), dba_loss(set, dba(set, 10)));
  }
}

TEST(WeightedDba, EqualWeightsReproduceDbaBitwise) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<TimeSeries> set;
    for (int i = 0; i < 5; ++i) set.push_back(random_series(rng, 2, 6 + rng.index(10)));
    const TimeSeries init = medoid(set);
    const std::vector<double> w(set.size(), 0.2);
    EXPECT_EQ(weighted_dba(set, w, init), dba(set, init));
    const std::vector<double> w3(set.size(), 3.0);
    EXPECT_EQ(weighted_dba(set, w3, init, 4), dba(set, init, 4));
  }
}

TEST(WeightedDba, RejectsBadWeights) {
  Rng rng(8);
  const std::vector<TimeSeries> set{random_series(rng, 1, 5), random_series(rng, 1, 5)};
  EXPECT_THROW(weighted_dba(set, std::vector<double>{1.0}, set[0]), DataError);
  EXPECT_THROW(weighted_dba(set, std::vector<double>{1.0, -1.0}, set[0]), DataError);
  EXPECT_THROW(weighted_dba(set, std::vector<double>{0.0, 0.0}, set[0]), DataError);
}

TEST(AverageSelected, WeightsForTenMembers) {
  Rng data(10);
  std::vector<TimeSeries> set;
  for (int i = 0; i < 10; ++i) set.push_back(random_series(data, 1, 15));
  Rng rng(1);
  const auto w = average_selected_weights(set, 4, rng);
  EXPECT_EQ(w[4], 0.5);
  std::vector<double> others;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i != 4) others.push_back(w[i]);
  }
  std::sort(others.begin(), others.end());
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(others[i], 0.2 / 7.0, 1e-15);
  EXPECT_EQ(others[7], 0.15);
  EXPECT_EQ(others[8], 0.15);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(AverageSelected, PickedNeighboursAreAmongFiveNearest) {
  Rng data(12);
  std::vector<TimeSeries> set;
  for (int i = 0; i < 9; ++i) set.push_back(random_series(data, 1, 12));
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const auto w = average_selected_weights(set, 0, rng);
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t i = 1; i < 9; ++i) near.emplace_back(dtw_cost(set[0], set[i]), i);
    std::sort(near.begin(), near.end());
    for (std::size_t i = 1; i < 9; ++i) {
      if (w[i] == 0.15) {
        const auto rank = std::find_if(near.begin(), near.end(), [&](const auto& p) { return p.second == i; }) - near.begin();
        EXPECT_LT(rank, 5);
      }
    }
  }
}

TEST(AverageSelected, SmallSetsSumToOne) {
  Rng data(13);
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<TimeSeries> set;
    for (std::size_t i = 0; i < n; ++i) set.push_back(random_series(data, 1, 6));
    Rng rng(n);
    const auto w = average_selected_weights(set, 0, rng);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12) << n;
    for (double v : w) EXPECT_GT(v, 0.0);
  }
}

TEST(Augment, SingletonReturnsItself) {
  Rng rng(14);
  const std::vector<TimeSeries> set{random_series(rng, 1, 9)};
  EXPECT_EQ(weighted_dba_augment(set, 3), set[0]);
}

TEST(Augment, SyntheticSeriesStaysNearItsSeed) {
  Rng data(15);
  std::vector<TimeSeries> set;
  for (int i = 0; i < 8; ++i) {
    TimeSeries s(1, 20);
    for (std::size_t t = 0; t < 20; ++t) s(0, t) = std::sin(0.3 * static_cast<double>(t) + 0.2 * i) + data.uniform(-0.3, 0.3);
    set.push_back(s);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TimeSeries out = weighted_dba_augment(set, seed);
    Rng pick(seed);
    const std::size_t seed_index = pick.index(set.size());
    double farthest = 0.0;
    for (const auto& s : set) farthest = std::max(farthest, dtw_cost(out, s));
    EXPECT_LE(dtw_cost(out, set[seed_index]), farthest);
    EXPECT_EQ(out.length(), 20u);
  }
}

TEST(Augment, DoublesLargestClass) {
  Rng rng(16);
  LabeledDataset ds;
  ds.name = "a";
  ds.n_classes = 2;
  for (int i = 0; i < 8; ++i) {
    ds.series.push_back(random_series(rng, 1, 10));
    ds.labels.push_back(i < 3 ? 0 : 1);
  }
  const auto out = augment_dataset(ds, 1);
  EXPECT_EQ(out.class_counts(), (std::vector<std::size_t>{10, 10}));
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(out.series[i], ds.series[i]);
  EXPECT_EQ(out.length(), 10u);

  LabeledDataset single = toy_dataset("s", rng, 1, 4, 7);
  EXPECT_EQ(augment_dataset(single, 2).size(), 8u);
  const auto again = augment_dataset(ds, 1);
  EXPECT_EQ(again.series, out.series);
}

TEST(Nlts, IdenticalCopiesGiveUnitSchedules) {
  Rng rng(17);
  const TimeSeries x = random_series(rng, 1, 11);
  const std::vector<TimeSeries> set{x, x};
  const NltsResult r = nlts(set);
  EXPECT_EQ(r.schedule.target_length, 11u);
  for (const auto& c : r.schedule.counts) EXPECT_EQ(c, std::vector<std::size_t>(11, 1));
}

TEST(Nlts, OneRepeatedTimestamp) {
  const TimeSeries x(std::vector<double>{0, 1, 2, 3});
  const TimeSeries y(std::vector<double>{0, 1, 1, 2, 3});
  const std::vector<TimeSeries> set{x, y};
  const NltsResult r = nlts(set);
  EXPECT_EQ(r.schedule.target_length, 5u);
  EXPECT_EQ(r.schedule.counts[0], (std::vector<std::size_t>{1, 2, 1, 1}));
  EXPECT_EQ(r.schedule.counts[1], std::vector<std::size_t>(5, 1));
}

TEST(Nlts, NeedsTwoSeries) {
  Rng rng(18);
  const std::vector<TimeSeries> set{random_series(rng, 1, 4)};
  EXPECT_THROW(nlts(set), DataError);
}

TEST(Nlts, SchedulesReplayToTargetLength) {
  Rng rng(19);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<TimeSeries> set;
    const std::size_t n = 2 + rng.index(4);
    for (std::size_t i = 0; i < n; ++i) set.push_back(random_series(rng, 1 + trial % 2, 2 + rng.index(15)));
    const NltsResult r = nlts(set);
    ASSERT_EQ(r.schedule.counts.size(), n);
    EXPECT_EQ(r.average.length(), r.schedule.target_length);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& c = r.schedule.counts[s];
      ASSERT_EQ(c.size(), set[s].length());
      EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::size_t{0}), r.schedule.target_length);
      for (std::size_t v : c) EXPECT_GE(v, 1u);
      const TimeSeries dilated = apply_schedule(set[s], c);
      EXPECT_EQ(dilated.length(), r.schedule.target_length);
      // Replaying repeats timestamps in their original order.
      std::size_t k = 0;
      for (std::size_t t = 0; t < c.size(); ++t) {
        for (std::size_t rep = 0; rep < c[t]; ++rep, ++k) {
          for (std::size_t d = 0; d < set[s].dims(); ++d) EXPECT_EQ(dilated(d, k), set[s](d, t));
        }
      }
    }
  }
}

TEST(Nlts, DilationCountsAreMinimalCost) {
  // Brute force over all compositions of the target length.
  Rng rng(20);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.index(4), len = n + rng.index(4);
    const TimeSeries ref = random_series(rng, 1, len), s = random_series(rng, 1, n);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> counts(n, 1);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t idx, std::size_t left) {
      if (idx == n - 1) {
        counts[idx] = left;
        const TimeSeries d = apply_schedule(s, counts);
        double c = 0.0;
        for (std::size_t t = 0; t < len; ++t) c += pointwise_cost(ref, t, d, t);
        best = std::min(best, c);
        return;
      }
      for (std::size_t k = 1; k + (n - 1 - idx) <= left; ++k) {
        counts[idx] = k;
        rec(idx + 1, left - k);
      }
    };
    rec(0, len);
    const auto got = dilation_counts(ref, s);
    const TimeSeries d = apply_schedule(s, got);
    double c = 0.0;
    for (std::size_t t = 0; t < len; ++t) c += pointwise_cost(ref, t, d, t);
    EXPECT_NEAR(c, best, 1e-12);
  }
}

TEST(Similarity, ZeroDiagonalSymmetricAndMatchesRecomputation) {
  Rng rng(21);
  std::vector<LabeledDataset> sets{toy_dataset("A", rng, 2, 3, 12), toy_dataset("B", rng, 3, 2, 10),
                                   toy_dataset("C", rng, 2, 2, 14)};
  const SimilarityMatrix m = dataset_similarity(sets);
  ASSERT_EQ(m.names, (std::vector<std::string>{"A", "B", "C"}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(m.distances[i][i], 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_GE(m.distances[i][j], 0.0);
      EXPECT_NEAR(m.distances[i][j], m.distances[j][i], 1e-9);
      if (i == j) continue;
      // Recompute without the cached prototypes.
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : class_prototypes(sets[i])) {
        for (const auto& q : class_prototypes(sets[j])) best = std::min(best, dtw_cost(p, q));
      }
      EXPECT_EQ(m.distances[i][j], best);
    }
  }
}

TEST(Similarity, SingleClassDatasets) {
  Rng rng(22);
  std::vector<LabeledDataset> sets{toy_dataset("A", rng, 1, 1, 8), toy_dataset("B", rng, 1, 1, 9)};
  const SimilarityMatrix m = dataset_similarity(sets);
  EXPECT_EQ(m.distances[0][1], dtw_cost(sets[0].series[0], sets[1].series[0]));
}

TEST(Similarity, EmptyClassIsAnError) {
  Rng rng(23);
  LabeledDataset ds = toy_dataset("A", rng, 2, 2, 5);
  ds.n_classes = 3;
  EXPECT_THROW(class_prototypes(ds), DataError);
}

TEST(Similarity, CsvRoundTrip) {
  TempDir dir;
  SimilarityMatrix m;
  m.names = {"x", "y"};
  m.distances = {{0.0, 1.0 / 3.0}, {1.0 / 3.0, 0.0}};
  m.write_csv(dir / "s.csv");
  const auto back = SimilarityMatrix::read_csv(dir / "s.csv");
  EXPECT_EQ(back.names, m.names);
  EXPECT_EQ(back.distances, m.distances);
}

TEST(TransferSource, RankingRules) {
  SimilarityMatrix m;
  m.names = {"T", "A", "B", "C"};
  m.distances = {{0, 2, 1, 2}, {2, 0, 1, 1}, {1, 1, 0, 1}, {2, 1, 1, 0}};
  const std::vector<std::string> cands{"C", "A", "B", "T"};
  const auto r = select_transfer_source(m, "T", cands, 10);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].name, "T");
  EXPECT_EQ(r[0].distance, 0.0);
  EXPECT_EQ(r[1].name, "B");
  EXPECT_EQ(r[2].name, "A");
  EXPECT_EQ(r[3].name, "C");
  EXPECT_EQ(select_transfer_source(m, "T", cands, 2).size(), 2u);
  EXPECT_THROW(select_transfer_source(m, "Z", cands, 2), DataError);
}
