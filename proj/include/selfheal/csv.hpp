#pragma once

// Minimal CSV: comma separated, header row, LF line endings, no quoting
// (no field produced here contains a comma). Doubles are written in the
// shortest form that parses back to the same value.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

namespace selfheal {

/// Raised for malformed input files; `row` is the 1-based line number (0 when unknown).
struct DataError : std::runtime_error {
  std::size_t row;
  DataError(const std::string& what, std::size_t row_number = 0) : std::runtime_error(what), row(row_number) {}
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("missing column '" + std::string(name) + "'");
  }
};

/// Every row must have as many fields as the header.
inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw DataError("row " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                          " fields, found " + std::to_string(fields.size()),
                      line_no);
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw DataError("empty CSV input");
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

  template <class... Fields>
  void add(const Fields&... fields) {
    bool first = true;
    (put(fields, first), ...);
    out_ += '\n';
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ += ',';
      out_ += fields[i];
    }
    out_ += '\n';
  }

  const std::string& str() const { return out_; }
  void save(const std::string& path) const { write_file(path, out_); }

 private:
  void put(const std::string& s, bool& first) { sep(first); out_ += s; }
  void put(std::string_view s, bool& first) { sep(first); out_ += s; }
  void put(const char* s, bool& first) { sep(first); out_ += s; }
  void put(double v, bool& first) { sep(first); out_ += format_double(v); }
  template <class I>
    requires std::is_integral_v<I>
  void put(I v, bool& first) {
    sep(first);
    out_ += std::to_string(v);
  }
  void sep(bool& first) {
    if (!first) out_ += ',';
    first = false;
  }

  std::string out_;
};

}  // namespace selfheal
