#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsc/tensor.hpp"

namespace tsc {

/// D-dimensional real sequence of length T, stored dimension-major.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(std::size_t dims, std::size_t length, double fill = 0.0);
  /// Univariate series.
  explicit TimeSeries(std::vector<double> values);
  TimeSeries(std::size_t dims, std::vector<double> values);

  std::size_t dims() const noexcept { return dims_; }
  std::size_t length() const noexcept { return dims_ ? values_.size() / dims_ : 0; }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t dim, std::size_t t) { return values_[dim * length() + t]; }
  double operator()(std::size_t dim, std::size_t t) const { return values_[dim * length() + t]; }

  std::span<const double> dimension(std::size_t dim) const {
    return std::span<const double>(values_).subspan(dim * length(), length());
  }
  std::span<double> dimension(std::size_t dim) { return std::span<double>(values_).subspan(dim * length(), length()); }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  std::size_t dims_ = 0;
  std::vector<double> values_;
};

/// A train or test split.
struct LabeledDataset {
  std::string name;
  std::vector<TimeSeries> series;
  std::vector<int> labels;  // dense ids in [0, n_classes)
  int n_classes = 0;
  /// Raw label value for each dense id, ascending.
  std::vector<double> class_values;
  /// Set by the loader when rows had unequal lengths.
  bool variable_length = false;
  /// Real-valued targets (one row per series) for regression heads.
  std::vector<std::vector<double>> targets;

  std::size_t size() const noexcept { return series.size(); }
  std::size_t dims() const { return series.empty() ? 0 : series.front().dims(); }
  /// Common length; throws if the series lengths differ.
  std::size_t length() const;
  std::size_t max_length() const;
  std::vector<std::size_t> class_counts() const;

  /// Checks the dataset invariants (label range, shared D, sizes).
  void validate() const;

  /// Stacks the selected series into [B, D, T]; all must share T.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor batch() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

enum class Delimiter { automatic, tab, comma };

/// Raw-label -> dense-id mapping shared by the splits of one dataset.
using LabelMap = std::vector<double>;

/// Reads a UCR-format univariate file: `label<sep>v1<sep>v2...` per line.
/// Labels are remapped to 0..K-1 in ascending numeric order unless
/// `label_map` fixes the mapping (e.g. the train split's classes).
LabeledDataset load_ucr(const std::filesystem::path& path, Delimiter delimiter = Delimiter::automatic,
                        const std::optional<LabelMap>& label_map = std::nullopt);

/// Train and test files with one label mapping over the union of labels.
std::pair<LabeledDataset, LabeledDataset> load_ucr_pair(const std::filesystem::path& train,
                                                        const std::filesystem::path& test,
                                                        Delimiter delimiter = Delimiter::automatic);

/// Multivariate directory: `dim_<k>.txt` files (k = 0, 1, ...) holding one
/// row of values per series, plus `labels.txt` with one label per line.
LabeledDataset load_mts_dir(const std::filesystem::path& dir,
                            const std::optional<LabelMap>& label_map = std::nullopt);

/// Writes `label<TAB>values` rows with shortest round-trip number text, so a
/// reload reproduces every value exactly. Univariate only.
void write_ucr(const LabeledDataset& dataset, const std::filesystem::path& path);

/// Per-dimension zero mean / unit population std. Constant dimensions
/// (std below 1e-8) become all zeros.
TimeSeries z_normalize(const TimeSeries& series);
LabeledDataset z_normalize(const LabeledDataset& dataset);

/// Linear interpolation of one dimension onto `length` uniformly spaced points.
std::vector<double> resample_linear(std::span<const double> values, std::size_t length);
TimeSeries resample_linear(const TimeSeries& series, std::size_t length);

/// Stretches every series to the longest length by linear interpolation.
LabeledDataset equalize_lengths(const LabeledDataset& dataset);

/// Load-time pipeline used by the tools: equalize lengths, then z-normalize.
LabeledDataset prepare(const LabeledDataset& dataset);

struct PatternWindow {
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  bool contains(std::size_t t) const { return t >= start && t < end(); }
};

struct SyntheticOptions {
  std::size_t n_per_class = 32;
  std::size_t length = 128;
  int n_classes = 2;
  /// Start of each class's pattern window; empty = evenly spaced.
  std::vector<std::size_t> pattern_positions;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  LabeledDataset data;
  std::vector<PatternWindow> windows;  // ground truth, one per class
};

std::size_t synthetic_pattern_length(std::size_t length);

/// Uniform noise in [0, 0.1] with each class's window replaced by a
/// plateau of amplitude 1.0 (pattern length = round(10% of length)).
/// Series are emitted class by class; values are not z-normalized.
SyntheticDataset generate_synthetic(const SyntheticOptions& options);

/// Evenly spaced, disjoint window starts for `n_classes` patterns.
std::vector<std::size_t> default_pattern_positions(std::size_t length, int n_classes);

/// Locates `<stem>_TRAIN.<ext>` and `<stem>_TEST.<ext>` in a UCR dataset
/// directory. The test path is empty when no test file exists.
struct UcrFiles {
  std::string name;
  std::filesystem::path train;
  std::filesystem::path test;
};
UcrFiles find_ucr_files(const std::filesystem::path& dir);

}  // namespace tsc
