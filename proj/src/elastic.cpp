#include "tsc/elastic.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "tsc/config.hpp"
#include "tsc/error.hpp"

namespace tsc::align {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(const TimeSeries& a, const TimeSeries& b, const char* op) {
  if (a.empty() || b.empty()) throw DataError(std::string(op) + ": empty series");
  if (a.dims() != b.dims()) {
    throw DataError(std::string(op) + ": dimension mismatch (" + std::to_string(a.dims()) + " vs " +
                    std::to_string(b.dims()) + ")");
  }
}

void check_set(std::span<const TimeSeries> set, const char* op) {
  if (set.empty()) throw DataError(std::string(op) + ": empty set");
  for (const auto& s : set) {
    if (s.empty()) throw DataError(std::string(op) + ": set contains an empty series");
    if (s.dims() != set.front().dims()) throw DataError(std::string(op) + ": members differ in dimension count");
  }
}

// Full accumulated-cost matrix, row-major m x n.
std::vector<double> cost_matrix(const TimeSeries& a, const TimeSeries& b) {
  const std::size_t m = a.length(), n = b.length();
  std::vector<double> acc(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = pointwise_cost(a, i, b, j);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else if (i == 0) {
        best = acc[j - 1];
      } else if (j == 0) {
        best = acc[(i - 1) * n];
      } else {
        best = std::min({acc[(i - 1) * n + j - 1], acc[(i - 1) * n + j], acc[i * n + j - 1]});
      }
      acc[i * n + j] = best + c;
    }
  }
  return acc;
}

// One barycenter round. Returns the objective of `average` before the update.
double refine(std::span<const TimeSeries> set, std::span<const double> weights, TimeSeries& average) {
  const std::size_t len = average.length(), dims = average.dims();
  std::vector<double> sums(dims * len, 0.0), mass(len, 0.0);
  double loss = 0.0;
  for (std::size_t s = 0; s < set.size(); ++s) {
    const WarpingPath path = dtw(average, set[s]);
    loss += path.cost;
    const double w = weights[s];
    if (w == 0.0) continue;
    for (const auto& p : path.points) {
      for (std::size_t d = 0; d < dims; ++d) sums[d * len + p.i] += w * set[s](d, p.j);
      mass[p.i] += w;
    }
  }
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t i = 0; i < len; ++i) average(d, i) = sums[d * len + i] / mass[i];
  }
  return loss;
}

// Weights rescaled so the largest is exactly 1; equal weights become all
// ones, which makes the weighted update coincide with the plain one.
std::vector<double> rescale_weights(std::span<const TimeSeries> set, std::span<const double> weights) {
  if (weights.size() != set.size()) {
    throw DataError("weighted_dba: " + std::to_string(weights.size()) + " weights for " + std::to_string(set.size()) +
                    " series");
  }
  double top = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("weighted_dba: weights must be finite and non-negative");
    top = std::max(top, w);
  }
  if (top == 0.0) throw DataError("weighted_dba: all weights are zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= top;
  return out;
}

}  // namespace

double pointwise_cost(const TimeSeries& a, std::size_t i, const TimeSeries& b, std::size_t j) {
  double c = 0.0;
  for (std::size_t d = 0; d < a.dims(); ++d) {
    const double diff = a(d, i) - b(d, j);
    c += diff * diff;
  }
  return c;
}

double dtw_cost(const TimeSeries& a, const TimeSeries& b) {
  check_pair(a, b, "dtw");
  const std::size_t m = a.length(), n = b.length();
  std::vector<double> prev(n, kInf), cur(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = pointwise_cost(a, i, b, j);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else if (i == 0) {
        best = cur[j - 1];
      } else if (j == 0) {
        best = prev[0];
      } else {
        best = std::min({prev[j - 1], prev[j], cur[j - 1]});
      }
      cur[j] = best + c;
    }
    std::swap(prev, cur);
  }
  return prev[n - 1];
}

WarpingPath dtw(const TimeSeries& a, const TimeSeries& b) {
  check_pair(a, b, "dtw");
  const std::size_t m = a.length(), n = b.length();
  const auto acc = cost_matrix(a, b);
  WarpingPath path;
  path.cost = acc[m * n - 1];
  std::size_t i = m - 1, j = n - 1;
  path.points.push_back({i, j});
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc[(i - 1) * n + j - 1];
      const double up = acc[(i - 1) * n + j];
      const double left = acc[i * n + j - 1];
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.points.push_back({i, j});
  }
  std::reverse(path.points.begin(), path.points.end());
  return path;
}

std::size_t medoid_index(std::span<const TimeSeries> set) {
  check_set(set, "medoid");
  const std::size_t n = set.size();
  std::vector<double> totals(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = dtw_cost(set[i], set[j]);
      totals[i] += c;
      totals[j] += c;
    }
  }
  return static_cast<std::size_t>(std::min_element(totals.begin(), totals.end()) - totals.begin());
}

TimeSeries medoid(std::span<const TimeSeries> set) { return set[medoid_index(set)]; }

TimeSeries weighted_dba(std::span<const TimeSeries> set, std::span<const double> weights, const TimeSeries& init,
                        int iterations) {
  check_set(set, "dba");
  if (iterations < 1) throw UsageError("dba: iterations must be at least 1");
  if (init.empty() || init.dims() != set.front().dims()) throw DataError("dba: initial average does not match the set");
  const auto w = rescale_weights(set, weights);
  TimeSeries average = init;
  for (int k = 0; k < iterations; ++k) refine(set, w, average);
  return average;
}

TimeSeries dba(std::span<const TimeSeries> set, const TimeSeries& init, int iterations) {
  const std::vector<double> ones(set.size(), 1.0);
  return weighted_dba(set, ones, init, iterations);
}

TimeSeries dba(std::span<const TimeSeries> set, int iterations) { return dba(set, medoid(set), iterations); }

double dba_loss(std::span<const TimeSeries> set, const TimeSeries& average) {
  double loss = 0.0;
  for (const auto& s : set) loss += dtw_cost(average, s);
  return loss;
}

std::vector<double> dba_loss_trace(std::span<const TimeSeries> set, const TimeSeries& init, int iterations) {
  check_set(set, "dba");
  const std::vector<double> ones(set.size(), 1.0);
  TimeSeries average = init;
  std::vector<double> trace;
  for (int k = 0; k < iterations; ++k) trace.push_back(refine(set, ones, average));
  trace.push_back(dba_loss(set, average));
  return trace;
}

std::vector<double> average_selected_weights(std::span<const TimeSeries> set, std::size_t seed_index, Rng& rng) {
  check_set(set, "weighted_dba_augment");
  const std::size_t n = set.size();
  if (seed_index >= n) throw UsageError("weighted_dba_augment: seed index out of range");
  std::vector<double> weights(n, 0.0);
  weights[seed_index] = 0.5;
  if (n == 1) {
    weights[seed_index] = 1.0;
    return weights;
  }
  if (n < 3) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != seed_index) weights[i] = 0.5 / static_cast<double>(n - 1);
    }
    return weights;
  }

  std::vector<std::pair<double, std::size_t>> neighbours;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != seed_index) neighbours.emplace_back(dtw_cost(set[seed_index], set[i]), i);
  }
  std::sort(neighbours.begin(), neighbours.end());
  const std::size_t k = std::min<std::size_t>(5, n - 1);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < k; ++i) pool.push_back(neighbours[i].second);
  rng.shuffle(pool);
  const std::size_t picked = std::min<std::size_t>(2, pool.size());
  for (std::size_t i = 0; i < picked; ++i) weights[pool[i]] = 0.15;

  const std::size_t rest = n - 1 - picked;
  if (rest > 0) {
    const double share = (1.0 - 0.5 - 0.15 * static_cast<double>(picked)) / static_cast<double>(rest);
    for (std::size_t i = 0; i < n; ++i) {
      if (i != seed_index && weights[i] == 0.0) weights[i] = share;
    }
  } else {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= total;
  }
  return weights;
}

TimeSeries weighted_dba_augment(std::span<const TimeSeries> class_set, std::uint64_t seed) {
  check_set(class_set, "weighted_dba_augment");
  Rng rng(seed);
  const std::size_t seed_index = rng.index(class_set.size());
  if (class_set.size() == 1) return class_set.front();
  const auto weights = average_selected_weights(class_set, seed_index, rng);
  return weighted_dba(class_set, weights, class_set[seed_index]);
}

LabeledDataset augment_dataset(const LabeledDataset& dataset, std::uint64_t seed) {
  dataset.validate();
  const auto counts = dataset.class_counts();
  const std::size_t target = 2 * *std::max_element(counts.begin(), counts.end());
  LabeledDataset out = dataset;
  for (int c = 0; c < dataset.n_classes; ++c) {
    std::vector<TimeSeries> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.labels[i] == c) members.push_back(dataset.series[i]);
    }
    if (members.empty()) throw DataError("augment_dataset: class " + std::to_string(c) + " has no series");
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(c));
    for (std::size_t have = members.size(); have < target; ++have) {
      out.series.push_back(weighted_dba_augment(members, rng.next()));
      out.labels.push_back(c);
    }
  }
  return out;
}

TimeSeries apply_schedule(const TimeSeries& series, std::span<const std::size_t> counts) {
  if (counts.size() != series.length()) throw DataError("apply_schedule: schedule length does not match the series");
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  TimeSeries out(series.dims(), total);
  for (std::size_t d = 0; d < series.dims(); ++d) {
    std::size_t k = 0;
    for (std::size_t t = 0; t < counts.size(); ++t) {
      for (std::size_t r = 0; r < counts[t]; ++r) out(d, k++) = series(d, t);
    }
  }
  return out;
}

std::vector<std::size_t> dilation_counts(const TimeSeries& reference, const TimeSeries& series) {
  check_pair(reference, series, "dilation_counts");
  const std::size_t len = reference.length(), n = series.length();
  if (len < n) throw DataError("dilation_counts: reference is shorter than the series");
  // acc(i, j): best cost mapping reference[0..i] onto series[0..j], with
  // steps (i-1, j) -> (i, j) (duplicate j) or (i-1, j-1) -> (i, j).
  std::vector<double> acc(len * n, kInf);
  acc[0] = pointwise_cost(reference, 0, series, 0);
  for (std::size_t i = 1; i < len; ++i) {
    const std::size_t lo = n > len - i ? n - (len - i) : 0;
    const std::size_t hi = std::min(i, n - 1);
    for (std::size_t j = lo; j <= hi; ++j) {
      double best = acc[(i - 1) * n + j];
      if (j > 0) best = std::min(best, acc[(i - 1) * n + j - 1]);
      acc[i * n + j] = best + pointwise_cost(reference, i, series, j);
    }
  }
  std::vector<std::size_t> counts(n, 0);
  std::size_t j = n - 1;
  for (std::size_t i = len; i-- > 0;) {
    ++counts[j];
    if (i == 0) break;
    if (j > 0 && acc[(i - 1) * n + j - 1] <= acc[(i - 1) * n + j]) --j;
  }
  return counts;
}

NltsResult nlts(std::span<const TimeSeries> set, int iterations) {
  if (set.size() < 2) throw DataError("nlts: need at least two series");
  check_set(set, "nlts");
  std::size_t target = 0;
  for (const auto& s : set) target = std::max(target, s.length());
  TimeSeries init = medoid(set);
  if (init.length() != target) init = resample_linear(init, target);

  NltsResult result;
  result.average = dba(set, init, iterations);
  result.schedule.target_length = target;
  for (const auto& s : set) result.schedule.counts.push_back(dilation_counts(result.average, s));
  return result;
}

void write_schedule_csv(std::span<const std::size_t> counts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp,count\n";
  for (std::size_t t = 0; t < counts.size(); ++t) out << t << ',' << counts[t] << '\n';
}

void SimilarityMatrix::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (const auto& row : distances) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
}

SimilarityMatrix SimilarityMatrix::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  SimilarityMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty similarity file");
  for (const auto& name : split(trim(line), ',')) m.names.push_back(trim(name));
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split(trim(line), ',')) row.push_back(parse_double(cell, path.filename().string()));
    if (row.size() != m.names.size()) throw DataError(path.string() + ": row width does not match the header");
    m.distances.push_back(std::move(row));
  }
  if (m.distances.size() != m.names.size()) throw DataError(path.string() + ": matrix is not square");
  return m;
}

std::vector<TimeSeries> class_prototypes(const LabeledDataset& train, int iterations) {
  train.validate();
  std::vector<TimeSeries> prototypes;
  for (int c = 0; c < train.n_classes; ++c) {
    std::vector<TimeSeries> members;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train.labels[i] == c) members.push_back(train.series[i]);
    }
    if (members.empty()) {
      throw DataError("dataset '" + train.name + "': class " + std::to_string(c) + " has no training series");
    }
    prototypes.push_back(dba(members, iterations));
  }
  return prototypes;
}

double prototype_distance(std::span<const TimeSeries> a, std::span<const TimeSeries> b) {
  double best = kInf;
  for (const auto& p : a) {
    for (const auto& q : b) best = std::min(best, dtw_cost(p, q));
  }
  return best;
}

SimilarityMatrix dataset_similarity(std::span<const LabeledDataset> datasets, int iterations) {
  SimilarityMatrix m;
  std::vector<std::vector<TimeSeries>> prototypes;
  for (const auto& ds : datasets) {
    m.names.push_back(ds.name);
    prototypes.push_back(class_prototypes(ds, iterations));
  }
  const std::size_t n = datasets.size();
  m.distances.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = prototype_distance(prototypes[i], prototypes[j]);
      m.distances[i][j] = d;
      m.distances[j][i] = d;
    }
  }
  return m;
}

std::vector<RankedSource> select_transfer_source(const SimilarityMatrix& similarity, const std::string& target,
                                                 std::span<const std::string> candidates, std::size_t k) {
  const auto index_of = [&](const std::string& name) {
    const auto it = std::find(similarity.names.begin(), similarity.names.end(), name);
    if (it == similarity.names.end()) throw DataError("dataset '" + name + "' is not in the similarity matrix");
    return static_cast<std::size_t>(it - similarity.names.begin());
  };
  const std::size_t t = index_of(target);
  std::vector<RankedSource> ranked;
  for (const auto& c : candidates) ranked.push_back({c, similarity.distances[t][index_of(c)]});
  std::sort(ranked.begin(), ranked.end(), [](const RankedSource& a, const RankedSource& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.name < b.name;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace tsc::align
