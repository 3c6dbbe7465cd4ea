#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsc/dataset.hpp"
#include "tsc/rng.hpp"

namespace tsc::align {

/// Index pair (i into the first series, j into the second).
struct PathPoint {
  std::size_t i = 0;
  std::size_t j = 0;

  friend bool operator==(const PathPoint&, const PathPoint&) = default;
};

/// Monotone, continuous alignment from (0, 0) to (m-1, n-1).
struct WarpingPath {
  std::vector<PathPoint> points;
  double cost = 0.0;
};

/// Squared Euclidean distance between the timestamps a(:, i) and b(:, j).
double pointwise_cost(const TimeSeries& a, std::size_t i, const TimeSeries& b, std::size_t j);

/// Unconstrained dependent DTW. The cost is the raw sum of squared
/// Euclidean cell distances along the optimal path (no square root).
double dtw_cost(const TimeSeries& a, const TimeSeries& b);

/// Cost plus the optimal path. Backtracking prefers the diagonal step,
/// then the step along the first series (i-1, j), then (i, j-1).
WarpingPath dtw(const TimeSeries& a, const TimeSeries& b);

/// Set member minimizing the summed DTW cost to all members; ties go to
/// the lowest index.
std::size_t medoid_index(std::span<const TimeSeries> set);
TimeSeries medoid(std::span<const TimeSeries> set);

inline constexpr int kDefaultDbaIterations = 10;

/// DTW barycenter averaging: `iterations` rounds of (align every member to
/// the current average, replace each average element by the mean of the
/// elements aligned to it). The average keeps the length of `init`.
TimeSeries dba(std::span<const TimeSeries> set, const TimeSeries& init, int iterations = kDefaultDbaIterations);
/// Medoid-initialized DBA.
TimeSeries dba(std::span<const TimeSeries> set, int iterations = kDefaultDbaIterations);

/// Weighted barycenter refinement: each average element becomes the
/// weighted mean of the elements aligned to it, member s weighing
/// weights[s]. Equal weights reproduce dba() bit-for-bit.
TimeSeries weighted_dba(std::span<const TimeSeries> set, std::span<const double> weights, const TimeSeries& init,
                        int iterations = kDefaultDbaIterations);

/// Sum over the set of DTW costs to `average` (the DBA objective).
double dba_loss(std::span<const TimeSeries> set, const TimeSeries& average);

/// The per-iteration objective of a DBA run: entry 0 is the initial loss,
/// entry k the loss after k refinement rounds.
std::vector<double> dba_loss_trace(std::span<const TimeSeries> set, const TimeSeries& init, int iterations);

/// Weights of the "average selected" scheme around member `seed_index`:
/// the seed weighs 0.5, two members drawn from its 5 DTW-nearest
/// neighbours weigh 0.15 each, and the rest share the remaining mass.
/// Small sets degrade gracefully and weights always sum to 1.
std::vector<double> average_selected_weights(std::span<const TimeSeries> set, std::size_t seed_index, Rng& rng);

/// One synthetic series from a class by weighted DBA seeded at a randomly
/// chosen member.
TimeSeries weighted_dba_augment(std::span<const TimeSeries> class_set, std::uint64_t seed);

/// Adds synthetic series per class until every class holds twice as many
/// series as the largest original class. Originals come first.
LabeledDataset augment_dataset(const LabeledDataset& dataset, std::uint64_t seed);

/// Per-series duplication counts that dilate it onto a common length.
struct AlignmentSchedule {
  std::vector<std::vector<std::size_t>> counts;  // counts[s][t] >= 1
  std::size_t target_length = 0;
};

/// Repeats timestamp t of `series` counts[t] times.
TimeSeries apply_schedule(const TimeSeries& series, std::span<const std::size_t> counts);

/// Dilation-only alignment of `series` onto `reference` (at least as
/// long): every reference timestamp maps to exactly one series timestamp,
/// monotonically, and every series timestamp receives at least one.
/// Returns the duplication counts of the minimal-cost such mapping.
std::vector<std::size_t> dilation_counts(const TimeSeries& reference, const TimeSeries& series);

struct NltsResult {
  TimeSeries average;
  AlignmentSchedule schedule;
};

/// Non-linear temporal scaling of a set onto its DBA average. The average
/// has the length of the longest member (medoid init, linearly stretched
/// when shorter) and each member gets a dilation schedule onto it.
NltsResult nlts(std::span<const TimeSeries> set, int iterations = kDefaultDbaIterations);

void write_schedule_csv(std::span<const std::size_t> counts, const std::filesystem::path& path);

struct SimilarityMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> distances;

  void write_csv(const std::filesystem::path& path) const;
  static SimilarityMatrix read_csv(const std::filesystem::path& path);
};

/// One DBA prototype per class (medoid init, `iterations` rounds).
std::vector<TimeSeries> class_prototypes(const LabeledDataset& train, int iterations = kDefaultDbaIterations);

/// Distance between two prototype sets: the minimum pairwise DTW cost.
double prototype_distance(std::span<const TimeSeries> a, std::span<const TimeSeries> b);

/// Pairwise dataset distances over train splits; each unordered pair is
/// computed once and mirrored.
SimilarityMatrix dataset_similarity(std::span<const LabeledDataset> datasets, int iterations = kDefaultDbaIterations);

struct RankedSource {
  std::string name;
  double distance = 0.0;
};

/// Candidates ordered by ascending distance to `target` (ties by name);
/// at most k entries.
std::vector<RankedSource> select_transfer_source(const SimilarityMatrix& similarity, const std::string& target,
                                                 std::span<const std::string> candidates, std::size_t k);

}  // namespace tsc::align
