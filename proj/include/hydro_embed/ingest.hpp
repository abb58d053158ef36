#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hydro_embed/date.hpp"
#include "hydro_embed/error.hpp"

namespace hydro_embed {

inline constexpr int kNumForcingFeatures = 5;
inline constexpr double kMissingDischarge = -999.0;
inline constexpr int kMinOverlapDays = 271;

inline constexpr const char* kForcingHeader = "YYYY MM DD PRCP TMIN TMAX SRAD VP";
inline constexpr const char* kDischargeHeader = "YYYY MM DD QOBS";

/// Daily forcing: columns are precipitation (mm/day), min and max air
/// temperature (degC), shortwave radiation (W/m2) and vapor pressure (Pa).
struct ForcingSeries {
  DateStamp start;
  Eigen::MatrixXd values;  // num_days x 5

  Eigen::Index num_days() const { return values.rows(); }
  DateStamp date_at(Eigen::Index k) const { return add_days(start, k); }
  DateStamp end() const { return date_at(num_days() - 1); }

  friend bool operator==(const ForcingSeries& a, const ForcingSeries& b) {
    return a.start == b.start && a.values.rows() == b.values.rows() &&
           a.values.cols() == b.values.cols() && a.values == b.values;
  }
};

/// Daily mean discharge in mm/day; std::nullopt marks a missing day.
struct DischargeSeries {
  DateStamp start;
  std::vector<std::optional<double>> values;

  std::int64_t num_days() const { return static_cast<std::int64_t>(values.size()); }
  DateStamp date_at(std::int64_t k) const { return add_days(start, k); }
  DateStamp end() const { return date_at(num_days() - 1); }

  friend bool operator==(const DischargeSeries&, const DischargeSeries&) = default;
};

struct AttributeVector {
  std::vector<std::string> names;
  std::vector<double> values;

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

struct BasinRecord {
  std::string basin_id;
  ForcingSeries forcing;
  DischargeSeries discharge;
  AttributeVector attributes;
};

struct SkippedBasin {
  std::string basin_id;
  std::string reason;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string_view> split_char(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (true) {
    const auto j = line.find(sep, i);
    out.push_back(trim(line.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i)));
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return out;
}

inline std::optional<double> to_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<int> to_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct DatedRow {
  DateStamp date;
  std::vector<double> values;
};

[[noreturn]] inline void fail_line(ErrorCode code, std::size_t line_no, const std::string& msg) {
  throw Error(code, "line " + std::to_string(line_no) + ": " + msg);
}

// Reads header + `YYYY MM DD v1..vN` rows, checks dates are consecutive.
inline std::vector<DatedRow> read_dated_rows(std::istream& in, std::size_t num_values) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "no header line");

  std::vector<DatedRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_ws(line);
    if (fields.size() != 3 + num_values) {
      fail_line(ErrorCode::MalformedLine, line_no,
                "expected " + std::to_string(3 + num_values) + " fields, got " +
                    std::to_string(fields.size()));
    }
    const auto y = to_int(fields[0]);
    const auto m = to_int(fields[1]);
    const auto d = to_int(fields[2]);
    if (!y || !m || !d || !is_valid(DateStamp{*y, *m, *d})) {
      fail_line(ErrorCode::MalformedLine, line_no, "invalid date");
    }
    DatedRow row{DateStamp{*y, *m, *d}, {}};
    row.values.reserve(num_values);
    for (std::size_t k = 0; k < num_values; ++k) {
      const auto v = to_real(fields[3 + k]);
      if (!v || !std::isfinite(*v)) {
        fail_line(ErrorCode::MalformedLine, line_no, "non-numeric field '" + std::string(fields[3 + k]) + "'");
      }
      row.values.push_back(*v);
    }
    if (!rows.empty() && days_between(rows.back().date, row.date) != 1) {
      fail_line(ErrorCode::NonConsecutiveDates, line_no,
                to_string(rows.back().date) + " followed by " + to_string(row.date));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyFile, "no data lines");
  return rows;
}

inline void write_date(std::ostream& out, const DateStamp& d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d %02d %02d", d.year, d.month, d.day);
  out << buf;
}

}  // namespace detail

inline ForcingSeries parse_forcing(std::istream& in) {
  const auto rows = detail::read_dated_rows(in, kNumForcingFeatures);
  ForcingSeries out;
  out.start = rows.front().date;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), kNumForcingFeatures);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < kNumForcingFeatures; ++c) {
      out.values(static_cast<Eigen::Index>(i), c) = rows[i].values[c];
    }
  }
  return out;
}

inline DischargeSeries parse_discharge(std::istream& in) {
  const auto rows = detail::read_dated_rows(in, 1);
  DischargeSeries out;
  out.start = rows.front().date;
  out.values.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double v = rows[i].values[0];
    if (v == kMissingDischarge) {
      out.values.emplace_back(std::nullopt);
    } else if (v < 0.0) {
      throw Error(ErrorCode::NegativeDischarge,
                  "negative discharge " + detail::format_real(v) + " on " + to_string(out.date_at(static_cast<std::int64_t>(i))));
    } else {
      out.values.emplace_back(v);
    }
  }
  return out;
}

/// Parses `basin_id,<name1>,...` followed by one row per basin.
inline std::map<std::string, AttributeVector> parse_attributes(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> names;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_char(detail::trim(line), ',');
    for (std::size_t c = 1; c < cols.size(); ++c) names.emplace_back(cols[c]);
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptyFile, "attribute table has no header");

  std::map<std::string, AttributeVector> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_char(detail::trim(line), ',');
    if (cols.size() != names.size() + 1) {
      detail::fail_line(ErrorCode::InconsistentColumnCount, line_no,
                        "expected " + std::to_string(names.size() + 1) + " columns, got " +
                            std::to_string(cols.size()));
    }
    std::string id(cols[0]);
    if (id.empty()) detail::fail_line(ErrorCode::MalformedLine, line_no, "empty basin_id");
    AttributeVector attrs{names, {}};
    attrs.values.reserve(names.size());
    for (std::size_t c = 1; c < cols.size(); ++c) {
      const auto v = detail::to_real(cols[c]);
      if (!v || !std::isfinite(*v)) {
        detail::fail_line(ErrorCode::NonNumericAttribute, line_no,
                          "attribute '" + names[c - 1] + "' = '" + std::string(cols[c]) + "'");
      }
      attrs.values.push_back(*v);
    }
    if (!out.emplace(id, std::move(attrs)).second) {
      detail::fail_line(ErrorCode::DuplicateBasinId, line_no, id);
    }
  }
  return out;
}

inline ForcingSeries parse_forcing(const std::string& text) {
  std::istringstream in(text);
  return parse_forcing(in);
}
inline DischargeSeries parse_discharge(const std::string& text) {
  std::istringstream in(text);
  return parse_discharge(in);
}
inline std::map<std::string, AttributeVector> parse_attributes(const std::string& text) {
  std::istringstream in(text);
  return parse_attributes(in);
}

inline std::string serialize_forcing(const ForcingSeries& f) {
  std::ostringstream out;
  out << kForcingHeader << '\n';
  for (Eigen::Index i = 0; i < f.num_days(); ++i) {
    detail::write_date(out, f.date_at(i));
    for (int c = 0; c < kNumForcingFeatures; ++c) out << ' ' << detail::format_real(f.values(i, c));
    out << '\n';
  }
  return out.str();
}

inline std::string serialize_discharge(const DischargeSeries& q) {
  std::ostringstream out;
  out << kDischargeHeader << '\n';
  for (std::int64_t i = 0; i < q.num_days(); ++i) {
    detail::write_date(out, q.date_at(i));
    const auto& v = q.values[static_cast<std::size_t>(i)];
    out << ' ' << (v ? detail::format_real(*v) : std::string("-999.0")) << '\n';
  }
  return out.str();
}

/// All vectors must share the attribute names of the first entry.
inline std::string serialize_attributes(const std::map<std::string, AttributeVector>& table,
                                        const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "basin_id";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& [id, attrs] : table) {
    if (attrs.values.size() != names.size()) {
      throw Error(ErrorCode::InconsistentColumnCount, "basin " + id);
    }
    out << id;
    for (double v : attrs.values) out << ',' << detail::format_real(v);
    out << '\n';
  }
  return out.str();
}

/// Number of days on which both forcing and discharge are defined.
inline std::int64_t overlap_days(const ForcingSeries& f, const DischargeSeries& q) {
  const auto lo = std::max(to_day_number(f.start), to_day_number(q.start));
  const auto hi = std::min(to_day_number(f.end()), to_day_number(q.end()));
  return std::max<std::int64_t>(0, hi - lo + 1);
}

namespace detail {
inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace detail

/// Loads `<root>/attributes.csv`, `<root>/forcing/<id>.txt` and
/// `<root>/discharge/<id>.txt`. Basins that fail to parse or overlap by
/// fewer than `min_overlap` days are skipped with a warning.
inline std::vector<BasinRecord> load_collection(const std::filesystem::path& root,
                                                const std::optional<std::vector<std::string>>& basin_list = std::nullopt,
                                                std::vector<SkippedBasin>* skipped = nullptr,
                                                std::int64_t min_overlap = kMinOverlapDays) {
  namespace fs = std::filesystem;
  const fs::path attr_path = root / "attributes.csv";
  if (!fs::exists(attr_path)) throw Error(ErrorCode::MissingAttributeFile, attr_path.string());
  const auto attributes = parse_attributes(detail::read_file(attr_path));

  std::set<std::string> ids;
  if (basin_list) {
    ids.insert(basin_list->begin(), basin_list->end());
  } else if (fs::is_directory(root / "forcing")) {
    for (const auto& entry : fs::directory_iterator(root / "forcing")) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") {
        ids.insert(entry.path().stem().string());
      }
    }
  }

  auto skip = [&](const std::string& id, const std::string& reason) {
    std::clog << "warning: skipping basin " << id << ": " << reason << '\n';
    if (skipped) skipped->push_back({id, reason});
  };

  std::vector<BasinRecord> records;
  for (const auto& id : ids) {
    const auto attr_it = attributes.find(id);
    if (attr_it == attributes.end()) {
      skip(id, "no row in attributes.csv");
      continue;
    }
    BasinRecord rec;
    rec.basin_id = id;
    rec.attributes = attr_it->second;
    try {
      rec.forcing = parse_forcing(detail::read_file(root / "forcing" / (id + ".txt")));
      rec.discharge = parse_discharge(detail::read_file(root / "discharge" / (id + ".txt")));
    } catch (const Error& e) {
      skip(id, e.what());
      continue;
    }
    const auto overlap = overlap_days(rec.forcing, rec.discharge);
    if (overlap < min_overlap) {
      skip(id, "forcing/discharge overlap of " + std::to_string(overlap) + " days is below " +
                   std::to_string(min_overlap));
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw Error(ErrorCode::NoValidBasins, root.string());
  return records;
}

}  // namespace hydro_embed
