#pragma once

// Per-node daily consumption profiles: 48 half-hourly readings per node, read
// from CSV or generated synthetically.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "selfheal/csv.hpp"
#include "selfheal/rng.hpp"

namespace selfheal {

inline constexpr std::size_t kRecordsPerNode = 48;

using NodeSeries = std::array<double, kRecordsPerNode>;

struct ConsumptionDataset {
  std::vector<NodeSeries> nodes;
  std::string source;

  std::size_t size() const { return nodes.size(); }
};

inline std::vector<std::string> dataset_header() {
  std::vector<std::string> h{"node"};
  for (std::size_t i = 0; i < kRecordsPerNode; ++i) h.push_back(i < 10 ? "v0" + std::to_string(i) : "v" + std::to_string(i));
  return h;
}

/// Base load plus a daily and a half-daily harmonic plus Gaussian noise, clamped at zero.
inline ConsumptionDataset generate_synthetic(std::size_t nodes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 5));
  ConsumptionDataset ds;
  ds.source = "synthetic(" + std::to_string(seed) + ")";
  ds.nodes.resize(nodes);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (auto& series : ds.nodes) {
    const double base = 0.2 + 1.3 * rng.uniform();
    const double a1 = base * (0.2 + 0.4 * rng.uniform());
    const double a2 = base * (0.1 + 0.2 * rng.uniform());
    const double p1 = two_pi * rng.uniform();
    const double p2 = two_pi * rng.uniform();
    const double noise = 0.05 * base;
    for (std::size_t h = 0; h < kRecordsPerNode; ++h) {
      const double x = two_pi * static_cast<double>(h) / static_cast<double>(kRecordsPerNode);
      const double v = base + a1 * std::sin(x + p1) + a2 * std::sin(2.0 * x + p2) + noise * rng.normal();
      series[h] = std::max(0.0, v);
    }
  }
  return ds;
}

inline std::string dataset_to_csv(const ConsumptionDataset& ds) {
  CsvWriter w(dataset_header());
  for (std::size_t i = 0; i < ds.nodes.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (double v : ds.nodes[i]) row.push_back(format_double(v));
    w.row(row);
  }
  return w.str();
}

/// Expects `node,v00..v47`; any row without exactly 48 non-negative values is rejected with its line number.
inline ConsumptionDataset dataset_from_csv(std::string_view text, std::string source = "csv") {
  ConsumptionDataset ds;
  ds.source = std::move(source);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (header) {
      header = false;
      if (fields.size() != kRecordsPerNode + 1) {
        throw DataError("row " + std::to_string(line_no) + ": header must have node plus 48 value columns", line_no);
      }
      continue;
    }
    if (fields.size() != kRecordsPerNode + 1) {
      throw DataError("row " + std::to_string(line_no) + ": expected 48 values, found " +
                          std::to_string(fields.empty() ? 0 : fields.size() - 1),
                      line_no);
    }
    NodeSeries s{};
    for (std::size_t i = 0; i < kRecordsPerNode; ++i) {
      double v = 0.0;
      try {
        v = parse_double(fields[i + 1]);
      } catch (const std::invalid_argument& e) {
        throw DataError("row " + std::to_string(line_no) + ": " + e.what(), line_no);
      }
      if (!(v >= 0.0) || std::isinf(v)) {
        throw DataError("row " + std::to_string(line_no) + ": values must be finite and >= 0", line_no);
      }
      s[i] = v;
    }
    ds.nodes.push_back(s);
  }
  if (header) throw DataError("dataset is empty");
  return ds;
}

}  // namespace selfheal
