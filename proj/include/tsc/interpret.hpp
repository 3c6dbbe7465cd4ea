#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tsc/dataset.hpp"
#include "tsc/model.hpp"

namespace tsc {

enum class CamNormalization { raw, minmax };

struct CamOptions {
  CamNormalization normalization = CamNormalization::raw;
  /// Centered moving-average window applied before normalization; 0 or 1
  /// disables it.
  std::size_t smooth_window = 0;
};

struct CamMap {
  std::vector<double> values;  // one per timestamp
  int class_id = 0;
  CamNormalization normalization = CamNormalization::raw;
};

/// CAM_c(t) = sum_m w[c, m] * A_m(t), A the post-ReLU input of global
/// pooling and w the head weights.
CamMap cam(const ModelState& model, const TimeSeries& series, int class_id, const CamOptions& options = {});

/// The same map computed from given activations [F, T] and head weights [K, F].
std::vector<double> cam_from(const Tensor& activations, const Tensor& head_weights, int class_id);

/// Rescales to [0, 1]; a constant map becomes all zeros.
std::vector<double> minmax_normalize(std::span<const double> values);
/// Centered moving average; the window shrinks at the borders.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

/// Columns timestamp, value, series_value (first dimension of `series`).
void write_cam_csv(const CamMap& map, const TimeSeries& series, const std::filesystem::path& path);

/// Eval-mode global-pooling outputs, one row per series: [N, F].
Tensor gap_features(const ModelState& model, const LabeledDataset& dataset);

/// Pairwise Euclidean distances between the rows of [N, F].
std::vector<std::vector<double>> euclidean_distances(const Tensor& rows);

enum class MdsInit { classical, random };

struct MdsOptions {
  int max_iterations = 300;
  /// Stop once (previous - current) / previous stress drops below this.
  double tolerance = 1e-9;
  MdsInit init = MdsInit::classical;
  std::uint64_t seed = 0;
};

struct Embedding2D {
  std::vector<std::array<double, 2>> points;
  /// sqrt(sum_{i<j} (d_ij - |x_i - x_j|)^2 / sum_{i<j} d_ij^2).
  double stress = 0.0;
  /// Stress of the initial placement followed by one value per iteration.
  std::vector<double> stress_history;
  int iterations = 0;
};

double normalized_stress(const std::vector<std::vector<double>>& distances,
                         const std::vector<std::array<double, 2>>& points);

/// Metric MDS by stress majorization (Guttman transform), started from
/// classical scaling, or from seeded uniform points when the classical
/// start is degenerate or not requested.
Embedding2D mds(const std::vector<std::vector<double>>& distances, const MdsOptions& options = {});

/// `# stress=<value>` then columns id, x, y.
void write_mds_csv(const Embedding2D& embedding, const std::filesystem::path& path);

}  // namespace tsc
