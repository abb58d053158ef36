#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hydro_embed/checkpoint.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/pipeline.hpp"
#include "hydro_embed/train.hpp"

namespace hydro_embed {

/// Nash-Sutcliffe efficiency: 1 - SSE / sum of squared deviations of the
/// observations from their mean.
inline double nse(std::span<const double> observed, std::span<const double> modeled) {
  if (observed.size() != modeled.size()) throw Error(ErrorCode::LengthMismatch, "observed and modeled differ in length");
  if (observed.size() < 2) throw Error(ErrorCode::LengthMismatch, "NSE needs at least two values");
  double mean = 0.0;
  for (double q : observed) mean += q;
  mean /= static_cast<double>(observed.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t t = 0; t < observed.size(); ++t) {
    sse += (modeled[t] - observed[t]) * (modeled[t] - observed[t]);
    sst += (observed[t] - mean) * (observed[t] - mean);
  }
  if (!(sst > 0.0)) throw Error(ErrorCode::ZeroVarianceObserved, "observed series is constant");
  return 1.0 - sse / sst;
}

struct BasinScore {
  std::string basin_id;
  double nse = 0.0;
  int num_samples = 0;

  friend bool operator==(const BasinScore&, const BasinScore&) = default;
};

struct EvalReport {
  std::vector<BasinScore> scores;
  std::optional<double> median_nse;  // undefined when no basin was scored
  std::optional<double> mean_nse;
  int num_negative = 0;
  std::vector<SkippedBasin> skipped_basins;
};

struct Aggregates {
  std::optional<double> median;
  std::optional<double> mean;
  int num_negative = 0;
};

/// Median (mean of the two central values for even counts), mean and the
/// count of strictly negative scores.
inline Aggregates aggregate(std::span<const double> values) {
  Aggregates a;
  if (values.empty()) return a;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  a.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  double sum = 0.0;
  for (double x : values) sum += x;
  a.mean = sum / static_cast<double>(n);
  a.num_negative = static_cast<int>(std::count_if(values.begin(), values.end(), [](double x) { return x < 0.0; }));
  return a;
}

inline void finalize(EvalReport& report) {
  std::vector<double> values;
  for (const auto& s : report.scores) values.push_back(s.nse);
  const auto a = aggregate(values);
  report.median_nse = a.median;
  report.mean_nse = a.mean;
  report.num_negative = a.num_negative;
}

inline EvalReport make_report(std::vector<BasinScore> scores, std::vector<SkippedBasin> skipped = {}) {
  EvalReport r;
  r.scores = std::move(scores);
  r.skipped_basins = std::move(skipped);
  finalize(r);
  return r;
}

/// Scores every basin over the evaluation period of `split` (the
/// checkpoint's own split when absent) in physical discharge units.
inline EvalReport evaluate(std::span<const BasinRecord> records, const Checkpoint& ck,
                           const std::optional<SplitSpec>& split = std::nullopt, int threads = 0) {
  const SplitSpec use_split = split.value_or(ck.split);
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < ck.basin_ids.size(); ++i) index[ck.basin_ids[i]] = static_cast<int>(i);
  if (ck.standardizers.dynamic.size() != kNumForcingFeatures) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "checkpoint expects " + std::to_string(ck.standardizers.dynamic.size()) + " forcing features");
  }

  std::vector<BasinScore> scores;
  std::vector<SkippedBasin> skipped;
  for (const auto& rec : records) {
    if (ck.model.use_static && static_cast<int>(rec.attributes.values.size()) != ck.model.static_dim) {
      throw Error(ErrorCode::IncompatibleCheckpoint, "basin " + rec.basin_id + " has " +
                                                         std::to_string(rec.attributes.values.size()) +
                                                         " attributes, checkpoint expects " + std::to_string(ck.model.static_dim));
    }
    const auto it = index.find(rec.basin_id);
    if (ck.model.use_embedding && it == index.end()) {
      skipped.push_back({rec.basin_id, "no learned embedding for this basin"});
      continue;
    }
    const int basin_index = it == index.end() ? 0 : it->second;
    const auto samples = make_samples(rec, basin_index, use_split, Phase::Eval, ck.standardizers, ck.lookback);
    if (samples.size() < 2) {
      skipped.push_back({rec.basin_id, "fewer than 2 evaluation samples"});
      continue;
    }
    const Eigen::VectorXd pred = predict(samples, ck.params, ck.model, threads);
    std::vector<double> obs, sim;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      obs.push_back(ck.standardizers.target.invert(samples[i].target));
      sim.push_back(ck.standardizers.target.invert(pred(static_cast<Eigen::Index>(i))));
    }
    try {
      scores.push_back({rec.basin_id, nse(obs, sim), static_cast<int>(samples.size())});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVarianceObserved) throw;
      skipped.push_back({rec.basin_id, "zero observed variance"});
    }
  }
  return make_report(std::move(scores), std::move(skipped));
}

enum class ReportFormat { Csv, Table };

inline std::string format_optional(const std::optional<double>& v) {
  return v ? detail::format_real(*v) : std::string("undefined");
}

/// `basin_id,nse,num_samples` rows, then `#`-prefixed footer lines for
/// skipped basins and the three aggregates.
inline std::string report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "basin_id,nse,num_samples\n";
  for (const auto& s : r.scores) out << s.basin_id << ',' << detail::format_real(s.nse) << ',' << s.num_samples << '\n';
  for (const auto& s : r.skipped_basins) out << "# skipped," << s.basin_id << ',' << s.reason << '\n';
  out << "# median_nse," << format_optional(r.median_nse) << '\n';
  out << "# mean_nse," << format_optional(r.mean_nse) << '\n';
  out << "# num_negative," << r.num_negative << '\n';
  return out.str();
}

inline EvalReport report_from_csv(std::istream& in) {
  EvalReport r;
  std::string line;
  bool header = false;
  auto opt = [](std::string_view s) -> std::optional<double> {
    if (s == "undefined") return std::nullopt;
    const auto v = detail::to_real(s);
    if (!v) throw Error(ErrorCode::MalformedLine, "bad aggregate '" + std::string(s) + "'");
    return v;
  };
  while (std::getline(in, line)) {
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    if (!header) {
      if (body != "basin_id,nse,num_samples") throw Error(ErrorCode::MalformedLine, "not an evaluation report");
      header = true;
      continue;
    }
    if (body.starts_with("# skipped,")) {
      const auto rest = body.substr(10);
      const auto comma = rest.find(',');
      r.skipped_basins.push_back({std::string(rest.substr(0, comma)),
                                  comma == std::string_view::npos ? "" : std::string(rest.substr(comma + 1))});
      continue;
    }
    const auto cols = detail::split_char(body.starts_with("# ") ? body.substr(2) : body, ',');
    if (body.starts_with("# ")) {
      if (cols.size() != 2) throw Error(ErrorCode::MalformedLine, std::string(body));
      if (cols[0] == "median_nse") r.median_nse = opt(cols[1]);
      else if (cols[0] == "mean_nse") r.mean_nse = opt(cols[1]);
      else if (cols[0] == "num_negative") r.num_negative = detail::to_int(cols[1]).value_or(0);
      continue;
    }
    if (cols.size() != 3) throw Error(ErrorCode::MalformedLine, std::string(body));
    const auto v = detail::to_real(cols[1]);
    const auto n = detail::to_int(cols[2]);
    if (!v || !n) throw Error(ErrorCode::MalformedLine, std::string(body));
    r.scores.push_back({std::string(cols[0]), *v, *n});
  }
  if (!header) throw Error(ErrorCode::EmptyFile, "empty report");
  return r;
}

inline EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open report " + path.string());
  return report_from_csv(in);
}

struct TableRow {
  std::string label;
  std::optional<double> mean_nse;
  std::optional<double> median_nse;
  int num_negative = 0;
};

/// Model | NSE mean | NSE median | basins with negative NSE.
inline std::string format_table(std::span<const TableRow> rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %10s  %s\n", static_cast<int>(width), "Model", "NSE mean", "NSE median",
                "No. of basins with NSE < 0");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9s  %10s  %d\n", static_cast<int>(width), r.label.c_str(),
                  num(r.mean_nse).c_str(), num(r.median_nse).c_str(), r.num_negative);
    out << buf;
  }
  return out.str();
}

inline TableRow table_row(const std::string& label, const EvalReport& r) {
  return {label, r.mean_nse, r.median_nse, r.num_negative};
}

inline void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format,
                         const std::string& label = "model") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  if (format == ReportFormat::Csv) {
    out << report_to_csv(report);
  } else {
    const TableRow row = table_row(label, report);
    out << format_table(std::span(&row, 1));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace hydro_embed
