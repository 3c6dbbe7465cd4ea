#include "tsc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "tsc/config.hpp"
#include "tsc/error.hpp"
#include "tsc/rng.hpp"

namespace tsc {

TimeSeries::TimeSeries(std::size_t dims, std::size_t length, double fill)
    : dims_(dims), values_(dims * length, fill) {}

TimeSeries::TimeSeries(std::vector<double> values) : dims_(1), values_(std::move(values)) {}

TimeSeries::TimeSeries(std::size_t dims, std::vector<double> values) : dims_(dims), values_(std::move(values)) {
  if (dims == 0 || values_.size() % dims != 0) {
    throw DataError("time series: " + std::to_string(values_.size()) + " values do not split into " +
                    std::to_string(dims) + " dimensions");
  }
}

// ---------------------------------------------------------------------------

std::size_t LabeledDataset::length() const {
  if (series.empty()) throw DataError("dataset '" + name + "' is empty");
  const std::size_t t = series.front().length();
  for (const auto& s : series) {
    if (s.length() != t) {
      throw DataError("dataset '" + name + "' has unequal series lengths; run equalize_lengths first");
    }
  }
  return t;
}

std::size_t LabeledDataset::max_length() const {
  std::size_t t = 0;
  for (const auto& s : series) t = std::max(t, s.length());
  return t;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(n_classes, 0)), 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

void LabeledDataset::validate() const {
  if (labels.size() != series.size()) {
    throw DataError("dataset '" + name + "': " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(series.size()) + " series");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw DataError("dataset '" + name + "': label " + std::to_string(labels[i]) + " of series " +
                      std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  const std::size_t d = dims();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].dims() != d) throw DataError("dataset '" + name + "': series " + std::to_string(i) + " has a different dimension count");
    if (series[i].length() == 0) throw DataError("dataset '" + name + "': series " + std::to_string(i) + " is empty");
  }
  if (!targets.empty() && targets.size() != series.size()) {
    throw DataError("dataset '" + name + "': target count does not match series count");
  }
}

Tensor LabeledDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DataError("dataset '" + name + "': empty batch");
  const std::size_t d = dims();
  const std::size_t t = series.at(indices[0]).length();
  Tensor out(Shape{indices.size(), d, t});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const TimeSeries& s = series.at(indices[i]);
    if (s.length() != t || s.dims() != d) {
      throw DataError("dataset '" + name + "': batch mixes series of different shapes; equalize lengths first");
    }
    std::copy(s.values().begin(), s.values().end(), out.raw() + i * d * t);
  }
  return out;
}

Tensor LabeledDataset::batch() const {
  std::vector<std::size_t> all(series.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return batch(all);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.name = name;
  out.n_classes = n_classes;
  out.class_values = class_values;
  out.variable_length = variable_length;
  for (std::size_t i : indices) {
    out.series.push_back(series.at(i));
    out.labels.push_back(labels.at(i));
    if (!targets.empty()) out.targets.push_back(targets.at(i));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct RawRows {
  std::vector<double> labels;
  std::vector<std::vector<double>> rows;
};

char detect_delimiter(const std::string& line, Delimiter requested) {
  switch (requested) {
    case Delimiter::tab:
      return '\t';
    case Delimiter::comma:
      return ',';
    case Delimiter::automatic:
      break;
  }
  if (line.find('\t') != std::string::npos) return '\t';
  if (line.find(',') != std::string::npos) return ',';
  return ' ';
}

std::vector<std::string> tokenize(const std::string& line, char sep) {
  std::vector<std::string> fields;
  if (sep == ' ') {
    std::string cur;
    for (char ch : line) {
      if (ch == ' ' || ch == '\r') {
        if (!cur.empty()) fields.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) fields.push_back(cur);
    return fields;
  }
  fields = split(line, sep);
  while (!fields.empty() && trim(fields.back()).empty()) fields.pop_back();
  return fields;
}

double parse_cell(const std::string& token, const std::filesystem::path& path, std::size_t row, std::size_t col) {
  const std::string t = trim(token);
  const std::string where = path.filename().string() + " row " + std::to_string(row) + " column " + std::to_string(col);
  if (t.empty()) throw DataError(where + ": empty cell");
  std::string lower = t;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "nan" || lower == "+nan" || lower == "-nan") throw DataError(where + ": NaN values are not accepted");
  return parse_double(t, where);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::vector<double>> read_matrix(const std::filesystem::path& path, Delimiter delimiter) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": file is empty");
  const char sep = detect_delimiter(lines.front(), delimiter);
  std::vector<std::vector<double>> rows;
  rows.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto fields = tokenize(lines[r], sep);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) row.push_back(parse_cell(fields[c], path, r + 1, c + 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

LabelMap sorted_unique(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

int lookup_label(const LabelMap& map, double raw, const std::string& context) {
  const auto it = std::lower_bound(map.begin(), map.end(), raw);
  if (it == map.end() || *it != raw) throw DataError(context + ": label " + format_double(raw) + " not among the known classes");
  return static_cast<int>(it - map.begin());
}

std::string dataset_name(const std::filesystem::path& path) {
  std::string stem = path.stem().string();
  for (const char* suffix : {"_TRAIN", "_TEST"}) {
    const std::string s(suffix);
    if (stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0) {
      return stem.substr(0, stem.size() - s.size());
    }
  }
  return stem;
}

}  // namespace

LabeledDataset load_ucr(const std::filesystem::path& path, Delimiter delimiter, const std::optional<LabelMap>& label_map) {
  const auto rows = read_matrix(path, delimiter);
  LabeledDataset ds;
  ds.name = dataset_name(path);
  std::vector<double> raw;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() < 2) {
      throw DataError(path.filename().string() + " row " + std::to_string(r + 1) + ": needs a label and at least one value");
    }
    raw.push_back(rows[r][0]);
    ds.series.emplace_back(std::vector<double>(rows[r].begin() + 1, rows[r].end()));
  }
  ds.class_values = label_map ? *label_map : sorted_unique(raw);
  ds.n_classes = static_cast<int>(ds.class_values.size());
  for (double v : raw) ds.labels.push_back(lookup_label(ds.class_values, v, path.filename().string()));
  const std::size_t t0 = ds.series.front().length();
  ds.variable_length = std::any_of(ds.series.begin(), ds.series.end(), [&](const TimeSeries& s) { return s.length() != t0; });
  ds.validate();
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> load_ucr_pair(const std::filesystem::path& train,
                                                        const std::filesystem::path& test, Delimiter delimiter) {
  // Labels from both splits define the classes so ids agree across splits.
  std::vector<double> raw;
  for (const auto& p : {train, test}) {
    const auto lines = read_lines(p);
    if (lines.empty()) throw DataError(p.string() + ": file is empty");
    const char sep = detect_delimiter(lines.front(), delimiter);
    for (std::size_t r = 0; r < lines.size(); ++r) {
      const auto fields = tokenize(lines[r], sep);
      if (fields.empty()) continue;
      raw.push_back(parse_cell(fields[0], p, r + 1, 1));
    }
  }
  const LabelMap map = sorted_unique(raw);
  return {load_ucr(train, delimiter, map), load_ucr(test, delimiter, map)};
}

LabeledDataset load_mts_dir(const std::filesystem::path& dir, const std::optional<LabelMap>& label_map) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  const fs::path label_path = dir / "labels.txt";
  if (!fs::exists(label_path)) throw DataError(dir.string() + ": missing labels.txt");

  std::vector<std::vector<std::vector<double>>> dims;
  for (std::size_t k = 0;; ++k) {
    const fs::path p = dir / ("dim_" + std::to_string(k) + ".txt");
    if (!fs::exists(p)) break;
    dims.push_back(read_matrix(p, Delimiter::automatic));
  }
  if (dims.empty()) throw DataError(dir.string() + ": no dim_<k>.txt files");

  const auto label_rows = read_matrix(label_path, Delimiter::automatic);
  const std::size_t n = label_rows.size();
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k].size() != n) {
      throw DataError(dir.string() + ": dim_" + std::to_string(k) + ".txt has " + std::to_string(dims[k].size()) +
                      " rows but labels.txt has " + std::to_string(n));
    }
  }

  LabeledDataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  std::vector<double> raw;
  for (const auto& row : label_rows) {
    if (row.size() != 1) throw DataError(label_path.string() + ": expected one label per line");
    raw.push_back(row[0]);
  }
  ds.class_values = label_map ? *label_map : sorted_unique(raw);
  ds.n_classes = static_cast<int>(ds.class_values.size());

  for (std::size_t i = 0; i < n; ++i) {
    // Dimensions of one series may differ in length; stretch them to the longest.
    std::size_t t = 0;
    for (const auto& d : dims) t = std::max(t, d[i].size());
    if (t == 0) throw DataError(dir.string() + ": series " + std::to_string(i) + " is empty");
    TimeSeries s(dims.size(), t);
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (dims[k][i].empty()) throw DataError(dir.string() + ": dimension " + std::to_string(k) + " of series " + std::to_string(i) + " is empty");
      const auto values = dims[k][i].size() == t ? dims[k][i] : resample_linear(dims[k][i], t);
      std::copy(values.begin(), values.end(), s.dimension(k).begin());
    }
    ds.series.push_back(std::move(s));
    ds.labels.push_back(lookup_label(ds.class_values, raw[i], label_path.filename().string()));
  }
  const std::size_t t0 = ds.series.front().length();
  ds.variable_length = std::any_of(ds.series.begin(), ds.series.end(), [&](const TimeSeries& s) { return s.length() != t0; });
  ds.validate();
  return ds;
}

void write_ucr(const LabeledDataset& dataset, const std::filesystem::path& path) {
  if (dataset.dims() != 1) throw DataError("write_ucr: only univariate datasets can be written in UCR format");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto id = static_cast<std::size_t>(dataset.labels[i]);
    const double raw = id < dataset.class_values.size() ? dataset.class_values[id] : static_cast<double>(id);
    out << format_double(raw);
    for (double v : dataset.series[i].values()) out << '\t' << format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

TimeSeries z_normalize(const TimeSeries& series) {
  constexpr double kStdFloor = 1e-8;
  TimeSeries out = series;
  const std::size_t t = series.length();
  for (std::size_t d = 0; d < series.dims(); ++d) {
    auto x = out.dimension(d);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(t));
    if (sd < kStdFloor) {
      std::fill(x.begin(), x.end(), 0.0);
    } else {
      for (double& v : x) v = (v - mean) / sd;
    }
  }
  return out;
}

LabeledDataset z_normalize(const LabeledDataset& dataset) {
  LabeledDataset out = dataset;
  for (auto& s : out.series) s = z_normalize(s);
  return out;
}

std::vector<double> resample_linear(std::span<const double> values, std::size_t length) {
  if (values.empty()) throw DataError("resample_linear: empty input");
  if (length == 0) throw DataError("resample_linear: target length must be positive");
  std::vector<double> out(length);
  const std::size_t n = values.size();
  if (n == 1 || length == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  if (n == length) {
    std::copy(values.begin(), values.end(), out.begin());
    return out;
  }
  const double step = static_cast<double>(n - 1) / static_cast<double>(length - 1);
  for (std::size_t k = 0; k < length; ++k) {
    const double pos = static_cast<double>(k) * step;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(lo);
    out[k] = values[lo] + frac * (values[lo + 1] - values[lo]);
  }
  out.back() = values.back();
  return out;
}

TimeSeries resample_linear(const TimeSeries& series, std::size_t length) {
  TimeSeries out(series.dims(), length);
  for (std::size_t d = 0; d < series.dims(); ++d) {
    const auto v = resample_linear(series.dimension(d), length);
    std::copy(v.begin(), v.end(), out.dimension(d).begin());
  }
  return out;
}

LabeledDataset equalize_lengths(const LabeledDataset& dataset) {
  if (dataset.series.empty()) throw DataError("equalize_lengths: dataset '" + dataset.name + "' is empty");
  LabeledDataset out = dataset;
  const std::size_t t = dataset.max_length();
  for (auto& s : out.series) {
    if (s.length() != t) s = resample_linear(s, t);
  }
  out.variable_length = false;
  return out;
}

LabeledDataset prepare(const LabeledDataset& dataset) { return z_normalize(equalize_lengths(dataset)); }

// ---------------------------------------------------------------------------

std::size_t synthetic_pattern_length(std::size_t length) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(length))));
}

std::vector<std::size_t> default_pattern_positions(std::size_t length, int n_classes) {
  const std::size_t plen = synthetic_pattern_length(length);
  std::vector<std::size_t> out;
  for (int c = 0; c < n_classes; ++c) {
    const double centre = static_cast<double>(length) * (c + 1) / (n_classes + 1);
    const double start = std::clamp(centre - static_cast<double>(plen) / 2.0, 0.0, static_cast<double>(length - plen));
    out.push_back(static_cast<std::size_t>(std::llround(start)));
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticOptions& options) {
  if (options.n_classes < 1) throw UsageError("generate_synthetic: need at least one class");
  if (options.length < 2) throw UsageError("generate_synthetic: length must be at least 2");
  if (options.n_per_class < 1) throw UsageError("generate_synthetic: n_per_class must be positive");
  const std::size_t plen = synthetic_pattern_length(options.length);
  const auto positions = options.pattern_positions.empty()
                             ? default_pattern_positions(options.length, options.n_classes)
                             : options.pattern_positions;
  if (positions.size() != static_cast<std::size_t>(options.n_classes)) {
    throw UsageError("generate_synthetic: " + std::to_string(positions.size()) + " pattern positions for " +
                     std::to_string(options.n_classes) + " classes");
  }
  std::set<std::size_t> seen;
  SyntheticDataset out;
  for (std::size_t pos : positions) {
    if (pos + plen > options.length) {
      throw UsageError("generate_synthetic: pattern window at " + std::to_string(pos) + " exceeds length " +
                       std::to_string(options.length));
    }
    if (!seen.insert(pos).second) {
      throw UsageError("generate_synthetic: two classes share the pattern window at " + std::to_string(pos));
    }
    out.windows.push_back(PatternWindow{pos, plen});
  }

  Rng rng(options.seed);
  LabeledDataset& ds = out.data;
  ds.name = "synthetic";
  ds.n_classes = options.n_classes;
  for (int c = 0; c < options.n_classes; ++c) ds.class_values.push_back(c);
  for (int c = 0; c < options.n_classes; ++c) {
    const PatternWindow w = out.windows[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < options.n_per_class; ++i) {
      std::vector<double> v(options.length);
      for (auto& x : v) x = rng.uniform(0.0, 0.1);
      std::fill(v.begin() + static_cast<std::ptrdiff_t>(w.start), v.begin() + static_cast<std::ptrdiff_t>(w.end()), 1.0);
      ds.series.emplace_back(std::move(v));
      ds.labels.push_back(c);
    }
  }
  return out;
}

UcrFiles find_ucr_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  UcrFiles files;
  for (const auto& p : entries) {
    const std::string stem = p.stem().string();
    if (stem.size() > 6 && stem.ends_with("_TRAIN") && files.train.empty()) {
      files.train = p;
      files.name = stem.substr(0, stem.size() - 6);
    }
  }
  if (files.train.empty()) throw DataError(dir.string() + ": no <name>_TRAIN file found");
  for (const auto& p : entries) {
    if (p.stem().string() == files.name + "_TEST") files.test = p;
  }
  return files;
}

}  // namespace tsc
