#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "hydro_embed/date.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/rng.hpp"

namespace hydro_embed {

inline constexpr int kDefaultLookback = 270;

struct SplitSpec {
  DateStamp train_start{1999, 10, 1};
  DateStamp train_end{2008, 9, 30};
  DateStamp eval_start{1989, 10, 1};
  DateStamp eval_end{1999, 9, 30};

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;

  /// Ranges are inclusive, disjoint and at least lookback + 1 days long.
  void validate(int lookback) const {
    for (const auto& d : {train_start, train_end, eval_start, eval_end}) {
      if (!is_valid(d)) throw Error(ErrorCode::InvalidSplit, "invalid date " + to_string(d));
    }
    const auto train_len = days_between(train_start, train_end) + 1;
    const auto eval_len = days_between(eval_start, eval_end) + 1;
    if (train_len < lookback + 1 || eval_len < lookback + 1) {
      throw Error(ErrorCode::InvalidSplit, "each period needs at least lookback + 1 = " +
                                               std::to_string(lookback + 1) + " days");
    }
    if (!(train_end < eval_start || eval_end < train_start)) {
      throw Error(ErrorCode::InvalidSplit, "training and evaluation periods overlap");
    }
  }
};

enum class Phase { Train, Eval };

enum class FeatureGroup { Dynamic, Static, Target };

/// Elementwise (x - mean) / std.
struct Standardizer {
  Eigen::VectorXd means;
  Eigen::VectorXd stds;

  Eigen::Index size() const { return means.size(); }

  template <class Derived>
  Eigen::VectorXd apply(const Eigen::MatrixBase<Derived>& x) const {
    return ((x.array() - means.array()) / stds.array()).matrix();
  }
  double apply(double x, Eigen::Index k = 0) const { return (x - means(k)) / stds(k); }
  double invert(double z, Eigen::Index k = 0) const { return z * stds(k) + means(k); }

  friend bool operator==(const Standardizer& a, const Standardizer& b) {
    return a.means.size() == b.means.size() && a.stds.size() == b.stds.size() &&
           a.means == b.means && a.stds == b.stds;
  }
};

struct Standardizers {
  Standardizer dynamic;
  std::optional<Standardizer> static_attrs;
  Standardizer target;

  friend bool operator==(const Standardizers&, const Standardizers&) = default;
};

namespace detail {

inline bool in_range(const DateStamp& d, const DateStamp& lo, const DateStamp& hi) {
  return !(d < lo) && !(hi < d);
}

// Population statistics of per-feature pools. Features whose training values
// are all identical get std 1 so their standardized output is exactly 0.
inline Standardizer pooled_statistics(const std::vector<std::vector<double>>& pools) {
  Standardizer s;
  const auto n = static_cast<Eigen::Index>(pools.size());
  s.means.resize(n);
  s.stds.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& v = pools[static_cast<std::size_t>(k)];
    if (v.empty()) throw Error(ErrorCode::EmptyTrainingPeriod, "feature " + std::to_string(k) + " has no training values");
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) {
      s.means(k) = *lo;
      s.stds(k) = 1.0;
      continue;
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    s.means(k) = mean;
    s.stds(k) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

}  // namespace detail

/// Statistics pooled over every basin, using the training period only.
inline Standardizer fit_standardizer(std::span<const BasinRecord> records, const SplitSpec& split,
                                     FeatureGroup which) {
  std::vector<std::vector<double>> pools;
  switch (which) {
    case FeatureGroup::Dynamic: {
      pools.resize(kNumForcingFeatures);
      for (const auto& r : records) {
        for (Eigen::Index i = 0; i < r.forcing.num_days(); ++i) {
          if (!detail::in_range(r.forcing.date_at(i), split.train_start, split.train_end)) continue;
          for (int c = 0; c < kNumForcingFeatures; ++c) pools[c].push_back(r.forcing.values(i, c));
        }
      }
      break;
    }
    case FeatureGroup::Static: {
      if (records.empty()) throw Error(ErrorCode::EmptyTrainingPeriod, "no basins");
      pools.resize(records.front().attributes.values.size());
      for (const auto& r : records) {
        if (r.attributes.values.size() != pools.size()) {
          throw Error(ErrorCode::InconsistentColumnCount, "basin " + r.basin_id);
        }
        for (std::size_t c = 0; c < pools.size(); ++c) pools[c].push_back(r.attributes.values[c]);
      }
      break;
    }
    case FeatureGroup::Target: {
      pools.resize(1);
      for (const auto& r : records) {
        for (std::int64_t i = 0; i < r.discharge.num_days(); ++i) {
          const auto& q = r.discharge.values[static_cast<std::size_t>(i)];
          if (q && detail::in_range(r.discharge.date_at(i), split.train_start, split.train_end)) {
            pools[0].push_back(*q);
          }
        }
      }
      break;
    }
  }
  return detail::pooled_statistics(pools);
}

/// One training/evaluation example. The window is a view into the basin's
/// standardized forcing, one column per timestep, oldest first.
struct Sample {
  int basin_index = 0;
  std::shared_ptr<const Eigen::MatrixXd> series;  // 5 x num_days, standardized
  Eigen::Index first_day = 0;
  int lookback = 0;
  std::shared_ptr<const Eigen::VectorXd> static_attrs;  // standardized, may be null
  double target = 0.0;
  DateStamp target_date;

  auto window() const { return series->middleCols(first_day, lookback); }
};

struct Batch {
  std::vector<Sample> samples;
};

/// Emits one sample per phase day whose discharge is present and whose full
/// lookback window has forcing. Windows may start before the phase begins.
inline std::vector<Sample> make_samples(const BasinRecord& record, int basin_index, const SplitSpec& split,
                                        Phase phase, const Standardizers& standardizers, int lookback) {
  if (lookback < 1) throw Error(ErrorCode::InvalidConfig, "lookback must be >= 1");
  const DateStamp lo = phase == Phase::Train ? split.train_start : split.eval_start;
  const DateStamp hi = phase == Phase::Train ? split.train_end : split.eval_end;

  auto series = std::make_shared<Eigen::MatrixXd>(kNumForcingFeatures, record.forcing.num_days());
  const auto& dyn = standardizers.dynamic;
  for (Eigen::Index i = 0; i < record.forcing.num_days(); ++i) {
    series->col(i) = ((record.forcing.values.row(i).transpose().array() - dyn.means.array()) / dyn.stds.array()).matrix();
  }
  std::shared_ptr<const Eigen::VectorXd> attrs;
  if (standardizers.static_attrs) {
    const Eigen::Map<const Eigen::VectorXd> raw(record.attributes.values.data(),
                                                static_cast<Eigen::Index>(record.attributes.values.size()));
    if (raw.size() != standardizers.static_attrs->size()) {
      throw Error(ErrorCode::ShapeMismatch, "basin " + record.basin_id + " attribute count differs from standardizer");
    }
    attrs = std::make_shared<Eigen::VectorXd>(standardizers.static_attrs->apply(raw));
  }

  std::vector<Sample> out;
  const auto forcing_origin = to_day_number(record.forcing.start);
  const auto q_origin = to_day_number(record.discharge.start);
  const auto first = std::max({to_day_number(lo), q_origin, forcing_origin + lookback - 1});
  const auto last = std::min({to_day_number(hi), q_origin + record.discharge.num_days() - 1,
                              forcing_origin + record.forcing.num_days() - 1});
  for (auto day = first; day <= last; ++day) {
    const auto& q = record.discharge.values[static_cast<std::size_t>(day - q_origin)];
    if (!q) continue;
    Sample s;
    s.basin_index = basin_index;
    s.series = series;
    s.first_day = static_cast<Eigen::Index>(day - forcing_origin - lookback + 1);
    s.lookback = lookback;
    s.static_attrs = attrs;
    s.target = standardizers.target.apply(*q);
    s.target_date = from_day_number(day);
    out.push_back(std::move(s));
  }
  return out;
}

/// Seeded permutation of [0, n) cut into consecutive groups of batch_size.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (n == 0) throw Error(ErrorCode::EmptySampleSet, "no samples to batch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span(order), rng);
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + bs)));
  }
  return out;
}

inline std::vector<Batch> make_batches(std::span<const Sample> samples, int batch_size, std::uint64_t seed) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(samples.size(), batch_size, seed)) {
    Batch b;
    b.samples.reserve(idx.size());
    for (auto i : idx) b.samples.push_back(samples[i]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace hydro_embed
