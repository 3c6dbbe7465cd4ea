#include "tsc/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tsc/config.hpp"
#include "tsc/error.hpp"

namespace tsc {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw DataError("accuracy: empty input");
  if (predictions.size() != labels.size()) throw DataError("accuracy: prediction and label counts differ");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predictions[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

std::vector<double> average_ranks(std::span<const double> values, bool descending) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) throw DataError("spearman_rho: empty input");
  if (a.size() != b.size()) throw DataError("spearman_rho: inputs differ in length");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericError("spearman_rho: undefined for a constant input");
  return sab / std::sqrt(saa * sbb);
}

void ResultsTable::validate() const {
  if (classifiers.empty()) throw DataError("results table: no classifiers");
  if (values.size() != datasets.size()) throw DataError("results table: row count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != classifiers.size()) {
      throw DataError("results table: row '" + datasets[i] + "' has " + std::to_string(values[i].size()) +
                      " cells, expected " + std::to_string(classifiers.size()));
    }
    for (double v : values[i]) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("results table: accuracy outside [0, 1] in row '" + datasets[i] + "'");
    }
  }
}

std::vector<double> ResultsTable::column(std::size_t c) const {
  std::vector<double> col;
  col.reserve(values.size());
  for (const auto& row : values) col.push_back(row.at(c));
  return col;
}

ResultsTable ResultsTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results table " + path.string());
  ResultsTable t;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (header) {
      if (cells.size() < 2) throw DataError("results table: header needs dataset and at least one classifier");
      t.classifiers.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    if (cells.size() != t.classifiers.size() + 1) {
      throw DataError("results table line " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.classifiers.size() + 1) + " cells");
    }
    t.datasets.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      row.push_back(parse_double(cells[i], "results table line " + std::to_string(line_no)));
    }
    t.values.push_back(std::move(row));
  }
  if (header) throw DataError("results table " + path.string() + " is empty");
  t.validate();
  return t;
}

void ResultsTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "dataset";
  for (const auto& c : classifiers) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    out << datasets[i];
    for (double v : values[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

double chi_square_sf(double x, int df) {
  if (df < 1) throw UsageError("chi_square_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

FriedmanResult friedman_test(const ResultsTable& table) {
  table.validate();
  const std::size_t k = table.classifiers.size(), n = table.datasets.size();
  if (k < 2 || n < 2) throw DataError("friedman_test: needs at least 2 classifiers and 2 datasets");
  FriedmanResult r;
  r.average_ranks.assign(k, 0.0);
  for (const auto& row : table.values) {
    const auto ranks = average_ranks(row, true);
    for (std::size_t j = 0; j < k; ++j) r.average_ranks[j] += ranks[j];
  }
  for (double& v : r.average_ranks) v /= static_cast<double>(n);
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  double sum_sq = 0.0;
  for (double v : r.average_ranks) sum_sq += v * v;
  r.statistic = std::max(0.0, 12.0 * nd / (kd * (kd + 1.0)) * (sum_sq - kd * (kd + 1.0) * (kd + 1.0) / 4.0));
  r.df = static_cast<int>(k) - 1;
  r.p_value = chi_square_sf(r.statistic, r.df);
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("wilcoxon: samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (std::abs(v) > kDifferenceTolerance) d.push_back(v);
  }
  WilcoxonResult r;
  r.n = static_cast<int>(d.size());
  r.low_power = r.n < 6;
  r.exact = r.n <= kExactWilcoxonMax;
  if (d.empty()) return r;

  // Average ranks of |d| with near-equal magnitudes tied, kept doubled so
  // they stay integral.
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long long> rank2(d.size());
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(d[order[j + 1]]) - std::abs(d[order[i]]) <= kDifferenceTolerance) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = static_cast<long long>(i + j + 2);
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  long long wp2 = 0, total2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total2 += rank2[i];
    if (d[i] > 0) wp2 += rank2[i];
  }
  r.w_plus = static_cast<double>(wp2) / 2.0;
  r.w_minus = static_cast<double>(total2 - wp2) / 2.0;
  const long long observed2 = std::min(wp2, total2 - wp2);

  if (r.exact) {
    // Number of sign patterns per doubled W+ value.
    std::vector<double> ways(static_cast<std::size_t>(total2) + 1, 0.0);
    ways[0] = 1.0;
    long long reach = 0;
    for (long long rk : rank2) {
      reach += rk;
      for (long long s = reach; s >= rk; --s) ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - rk)];
    }
    double tail = 0.0;
    for (long long s = 0; s <= observed2; ++s) tail += ways[static_cast<std::size_t>(s)];
    r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, r.n));
  } else {
    const double n = static_cast<double>(r.n);
    double tie_term = 0.0;
    for (std::size_t t : tie_sizes) tie_term += static_cast<double>(t * t * t - t);
    const double mean = n * (n + 1.0) / 4.0;
    const double sd = std::sqrt(n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0);
    const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / sd;
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  return r;
}

std::vector<double> holm_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - i) * p[order[i]]));
    adj[order[i]] = running;
  }
  return adj;
}

std::vector<bool> holm_reject(std::span<const double> p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (p[order[i]] > alpha / static_cast<double>(m - i)) break;
    reject[order[i]] = true;
  }
  return reject;
}

ComparisonReport wilcoxon_holm(const ResultsTable& table, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("compare: alpha must lie in (0, 1)");
  table.validate();
  const std::size_t k = table.classifiers.size();
  ComparisonReport rep;
  rep.alpha = alpha;
  rep.classifiers = table.classifiers;
  rep.friedman = friedman_test(table);
  rep.average_ranks = rep.friedman.average_ranks;

  std::vector<double> p;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      PairComparison pc;
      pc.a = table.classifiers[a];
      pc.b = table.classifiers[b];
      pc.test = wilcoxon_signed_rank(table.column(a), table.column(b));
      p.push_back(pc.test.p_value);
      rep.pairs.push_back(std::move(pc));
    }
  }
  const auto adjusted = holm_adjust(p);
  const auto reject = holm_reject(p, alpha);
  for (std::size_t i = 0; i < rep.pairs.size(); ++i) {
    rep.pairs[i].adjusted_p = adjusted[i];
    rep.pairs[i].significant = reject[i];
  }

  // Rank order (best first), then maximal runs without a significant pair.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rep.average_ranks[a] < rep.average_ranks[b]; });
  auto significant = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < a; ++i) idx += k - 1 - i;
    return rep.pairs[idx + (b - a - 1)].significant;
  };
  std::size_t prev_end = 0;
  for (std::size_t start = 0; start < k; ++start) {
    std::size_t end = start + 1;
    while (end < k) {
      bool ok = true;
      for (std::size_t i = start; i < end && ok; ++i) ok = !significant(order[i], order[end]);
      if (!ok) break;
      ++end;
    }
    if (end > prev_end) {
      std::vector<std::string> clique;
      for (std::size_t i = start; i < end; ++i) clique.push_back(table.classifiers[order[i]]);
      rep.cliques.push_back(std::move(clique));
      prev_end = end;
    }
  }
  return rep;
}

std::string ComparisonReport::to_text() const {
  std::ostringstream out;
  out << "friedman: statistic=" << format_double(friedman.statistic) << " df=" << friedman.df
      << " p=" << format_double(friedman.p_value) << '\n';
  out << "average ranks:\n";
  std::vector<std::size_t> order(classifiers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return average_ranks[a] < average_ranks[b]; });
  for (std::size_t i : order) out << "  " << classifiers[i] << ' ' << format_double(average_ranks[i]) << '\n';
  out << "pairwise wilcoxon (holm, alpha=" << format_double(alpha) << "):\n";
  for (const auto& pc : pairs) {
    out << "  " << pc.a << " vs " << pc.b << ": p=" << format_double(pc.test.p_value)
        << " adjusted=" << format_double(pc.adjusted_p) << (pc.significant ? " significant" : " not-significant")
        << (pc.test.low_power ? " low-power" : "") << '\n';
  }
  out << "cliques:\n";
  for (const auto& c : cliques) {
    out << " ";
    for (const auto& name : c) out << ' ' << name;
    out << '\n';
  }
  return out.str();
}

void ComparisonReport::write_csv(const std::filesystem::path& pairs_path, const std::filesystem::path& ranks_path) const {
  std::ofstream pairs_out(pairs_path);
  if (!pairs_out) throw DataError("cannot write " + pairs_path.string());
  pairs_out << "a,b,n,w_plus,w_minus,p_value,adjusted_p,significant,exact,low_power\n";
  for (const auto& pc : pairs) {
    pairs_out << pc.a << ',' << pc.b << ',' << pc.test.n << ',' << format_double(pc.test.w_plus) << ','
              << format_double(pc.test.w_minus) << ',' << format_double(pc.test.p_value) << ','
              << format_double(pc.adjusted_p) << ',' << (pc.significant ? 1 : 0) << ',' << (pc.test.exact ? 1 : 0)
              << ',' << (pc.test.low_power ? 1 : 0) << '\n';
  }
  std::ofstream ranks_out(ranks_path);
  if (!ranks_out) throw DataError("cannot write " + ranks_path.string());
  ranks_out << "classifier,average_rank\n";
  for (std::size_t i = 0; i < classifiers.size(); ++i) {
    ranks_out << classifiers[i] << ',' << format_double(average_ranks[i]) << '\n';
  }
}

}  // namespace tsc
