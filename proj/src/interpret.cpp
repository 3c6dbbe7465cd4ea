#include "tsc/interpret.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tsc/config.hpp"
#include "tsc/error.hpp"
#include "tsc/rng.hpp"

namespace tsc {

namespace {

void require_gap(const ModelState& model, const char* op) {
  if (!model.spec.gap_terminated()) {
    throw UsageError(std::string(op) + ": the " + to_string(model.spec.architecture) + " has no global pooling layer");
  }
}

}  // namespace

std::vector<double> cam_from(const Tensor& a, const Tensor& w, int class_id) {
  if (a.rank() != 2 || w.rank() != 2 || w.dim(1) != a.dim(0)) {
    throw ShapeError("cam", "features", "activations " + shape_string(a.shape()) + " vs head " + shape_string(w.shape()));
  }
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= w.dim(0)) {
    throw UsageError("cam: class id " + std::to_string(class_id) + " out of range");
  }
  const std::size_t f = a.dim(0), t = a.dim(1);
  std::vector<double> out(t, 0.0);
  for (std::size_t m = 0; m < f; ++m) {
    const double wm = w.at(static_cast<std::size_t>(class_id), m);
    for (std::size_t j = 0; j < t; ++j) out[j] += wm * a.at(m, j);
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo, range = *hi - *lo;
  for (double& x : out) x = range > 0.0 ? (x - a) / range : 0.0;
  return out;
}

std::vector<double> moving_average(std::span<const double> v, std::size_t window) {
  if (window <= 1) return {v.begin(), v.end()};
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
  std::vector<double> out(v.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, i - half + static_cast<std::ptrdiff_t>(window));
    double s = 0.0;
    for (std::ptrdiff_t j = lo; j < hi; ++j) s += v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo);
  }
  return out;
}

CamMap cam(const ModelState& model, const TimeSeries& series, int class_id, const CamOptions& options) {
  require_gap(model, "cam");
  ad::Tape tape;
  ParameterBinding params(tape, model, false);
  const Tensor x(Shape{1, series.dims(), series.length()}, series.values());
  const ForwardResult r = forward(model, params, tape.constant(x), ForwardOptions{}, nullptr);
  const Tensor& act = r.last_activation.value();
  const Tensor a = act.reshaped(Shape{act.dim(1), act.dim(2)});
  CamMap map;
  map.class_id = class_id;
  map.values = cam_from(a, model.parameters.at("head.weight"), class_id);
  map.values = moving_average(map.values, options.smooth_window);
  if (options.normalization == CamNormalization::minmax) map.values = minmax_normalize(map.values);
  map.normalization = options.normalization;
  return map;
}

void write_cam_csv(const CamMap& map, const TimeSeries& series, const std::filesystem::path& path) {
  if (series.length() != map.values.size()) throw DataError("cam csv: map and series lengths differ");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp,value,series_value\n";
  for (std::size_t t = 0; t < map.values.size(); ++t) {
    out << t << ',' << format_double(map.values[t]) << ',' << format_double(series(0, t)) << '\n';
  }
}

Tensor gap_features(const ModelState& model, const LabeledDataset& dataset) {
  require_gap(model, "gap_features");
  if (dataset.size() == 0) throw DataError("gap_features: empty dataset");
  constexpr std::size_t chunk = 64;
  std::vector<double> rows;
  std::size_t width = 0;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    ParameterBinding params(tape, model, false);
    const ForwardResult r = forward(model, params, tape.constant(dataset.batch(idx)), ForwardOptions{}, nullptr);
    const Tensor& f = r.features.value();
    width = f.dim(1);
    rows.insert(rows.end(), f.values().begin(), f.values().end());
  }
  return Tensor(Shape{dataset.size(), width}, std::move(rows));
}

std::vector<std::vector<double>> euclidean_distances(const Tensor& rows) {
  if (rows.rank() != 2) throw ShapeError("euclidean_distances", "rank", "expected [N, F]");
  const std::size_t n = rows.dim(0), f = rows.dim(1);
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < f; ++k) {
        const double z = rows.at(i, k) - rows.at(j, k);
        s += z * z;
      }
      d[i][j] = d[j][i] = std::sqrt(s);
    }
  }
  return d;
}

namespace {

using Points = std::vector<std::array<double, 2>>;

double pair_distance(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

void validate_distances(const std::vector<std::vector<double>>& d) {
  const std::size_t n = d.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i].size() != n) throw DataError("mds: distance matrix is not square");
    if (d[i][i] != 0.0) throw DataError("mds: distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(d[i][j]) || d[i][j] < 0.0) throw DataError("mds: distances must be finite and non-negative");
      if (std::abs(d[i][j] - d[j][i]) > 1e-9) throw DataError("mds: distance matrix is not symmetric");
    }
  }
}

Points classical_start(const std::vector<std::vector<double>>& d) {
  const Eigen::Index n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd sq(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = 0.5 * (d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                              d[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
      sq(i, j) = v * v;
    }
  }
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd b = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  if (eig.info() != Eigen::Success) return {};
  Points p(static_cast<std::size_t>(n), {0.0, 0.0});
  // Eigenvalues come in ascending order.
  bool any = false;
  for (int k = 0; k < 2 && k < n; ++k) {
    const Eigen::Index col = n - 1 - k;
    const double lambda = eig.eigenvalues()(col);
    if (!(lambda > 1e-12)) continue;
    any = true;
    const double s = std::sqrt(lambda);
    for (Eigen::Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = s * eig.eigenvectors()(i, col);
  }
  if (!any) return {};
  return p;
}

Points random_start(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Points p(n);
  for (auto& q : p) q = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  return p;
}

/// One Guttman transform with unit weights: X <- B(X) X / N.
Points guttman(const std::vector<std::vector<double>>& d, const Points& x) {
  const std::size_t n = x.size();
  Points out(n, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    double bii = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist = pair_distance(x[i], x[j]);
      const double bij = dist > 0.0 ? -d[i][j] / dist : 0.0;
      bii -= bij;
      out[i][0] += bij * x[j][0];
      out[i][1] += bij * x[j][1];
    }
    out[i][0] += bii * x[i][0];
    out[i][1] += bii * x[i][1];
  }
  for (auto& q : out) {
    q[0] /= static_cast<double>(n);
    q[1] /= static_cast<double>(n);
  }
  return out;
}

}  // namespace

double normalized_stress(const std::vector<std::vector<double>>& d, const Points& x) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double r = d[i][j] - pair_distance(x[i], x[j]);
      num += r * r;
      den += d[i][j] * d[i][j];
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

Embedding2D mds(const std::vector<std::vector<double>>& distances, const MdsOptions& options) {
  validate_distances(distances);
  if (options.max_iterations < 0) throw UsageError("mds: max_iterations must be non-negative");
  const std::size_t n = distances.size();
  Embedding2D e;
  if (n == 0) return e;
  Points x;
  if (options.init == MdsInit::classical && n > 1) x = classical_start(distances);
  if (x.empty()) x = random_start(n, options.seed);
  if (n == 1) x[0] = {0.0, 0.0};

  double stress = normalized_stress(distances, x);
  e.stress_history.push_back(stress);
  for (int it = 0; it < options.max_iterations && stress > 0.0; ++it) {
    Points next = guttman(distances, x);
    const double s = normalized_stress(distances, next);
    ++e.iterations;
    e.stress_history.push_back(s);
    const double change = (stress - s) / stress;
    x = std::move(next);
    stress = s;
    if (change < options.tolerance) break;
  }
  e.points = std::move(x);
  e.stress = stress;
  return e;
}

void write_mds_csv(const Embedding2D& embedding, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# stress=" << format_double(embedding.stress) << '\n' << "id,x,y\n";
  for (std::size_t i = 0; i < embedding.points.size(); ++i) {
    out << i << ',' << format_double(embedding.points[i][0]) << ',' << format_double(embedding.points[i][1]) << '\n';
  }
}

}  // namespace tsc
