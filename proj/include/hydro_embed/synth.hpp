#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "hydro_embed/date.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/rng.hpp"

namespace hydro_embed {

/// Linear reservoir: Q_t = k * S_t, S_{t+1} = S_t + (1 - loss) * P_t - Q_t.
struct SynthBasinSpec {
  std::string basin_id;
  double runoff_coeff = 0.1;   // (0, 1]
  double loss_fraction = 0.0;  // [0, 1)
  double storage0 = 0.0;
  std::uint64_t precip_seed = 0;

  void validate() const {
    if (!(runoff_coeff > 0.0 && runoff_coeff <= 1.0)) throw Error(ErrorCode::InvalidConfig, basin_id + ": runoff_coeff must lie in (0, 1]");
    if (!(loss_fraction >= 0.0 && loss_fraction < 1.0)) throw Error(ErrorCode::InvalidConfig, basin_id + ": loss_fraction must lie in [0, 1)");
    if (!(storage0 >= 0.0)) throw Error(ErrorCode::InvalidConfig, basin_id + ": storage0 must be >= 0");
  }

  friend bool operator==(const SynthBasinSpec&, const SynthBasinSpec&) = default;
};

struct SynthFixture {
  std::vector<SynthBasinSpec> basins;
  int num_days = 0;
  bool shared_forcing = true;
  DateStamp start{2001, 10, 1};
};

inline constexpr double kWetDayProbability = 0.3;
inline constexpr double kMeanRainDepth = 8.0;

/// Intermittent exponential rainfall plus seasonal sinusoids with small
/// Gaussian noise for the other four forcings.
inline ForcingSeries generate_forcing(std::uint64_t seed, int num_days, DateStamp start = {2001, 10, 1}) {
  if (num_days < 1) throw Error(ErrorCode::InvalidConfig, "num_days must be >= 1");
  Rng rng(seed);
  ForcingSeries f;
  f.start = start;
  f.values.resize(num_days, kNumForcingFeatures);
  const auto origin = to_day_number(DateStamp{start.year, 1, 1});
  for (int t = 0; t < num_days; ++t) {
    const double u_wet = rng.uniform();
    const double u_depth = rng.uniform_open0();
    const double prcp = u_wet < kWetDayProbability ? -kMeanRainDepth * std::log(u_depth) : 0.0;
    // Phase 0 on Jan 1; the warm season peaks in mid-July.
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(to_day_number(start) + t - origin) / 365.25;
    const double season = -std::cos(phase);
    const double tmin = 2.0 + 10.0 * season + 1.5 * rng.normal();
    const double tmax = tmin + 10.0 + 2.0 * season + 1.0 * std::abs(rng.normal());
    const double srad = 200.0 + 100.0 * season + 15.0 * rng.normal();
    const double vp = 900.0 + 500.0 * season + 40.0 * rng.normal();
    f.values.row(t) << prcp, tmin, tmax, srad, vp;
  }
  return f;
}

struct SimulationResult {
  DischargeSeries discharge;
  double final_storage = 0.0;
};

inline SimulationResult simulate(const SynthBasinSpec& spec, const ForcingSeries& forcing) {
  spec.validate();
  SimulationResult out;
  out.discharge.start = forcing.start;
  out.discharge.values.reserve(static_cast<std::size_t>(forcing.num_days()));
  double storage = spec.storage0;
  for (Eigen::Index t = 0; t < forcing.num_days(); ++t) {
    const double q = spec.runoff_coeff * storage;
    out.discharge.values.emplace_back(q);
    storage = (storage - q) + (1.0 - spec.loss_fraction) * forcing.values(t, 0);
  }
  out.final_storage = storage;
  return out;
}

inline DischargeSeries simulate_discharge(const SynthBasinSpec& spec, const ForcingSeries& forcing) {
  return simulate(spec, forcing).discharge;
}

inline std::string format_basin_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "basin_%03d", i);
  return buf;
}

/// Draws basin parameters from `seed`: runoff_coeff log-uniform in
/// [0.02, 0.6], loss_fraction uniform in [0, 0.6], storage0 at the
/// reservoir's long-run mean.
inline SynthFixture make_fixture(int num_basins, int num_days, std::uint64_t seed, bool shared_forcing = true) {
  if (num_basins < 1) throw Error(ErrorCode::InvalidConfig, "need at least one basin");
  if (num_days < 1) throw Error(ErrorCode::InvalidConfig, "need at least one day");
  SynthFixture fx;
  fx.num_days = num_days;
  fx.shared_forcing = shared_forcing;
  Rng rng(seed);
  const std::uint64_t forcing_seed = derive_seed(seed, 0xF0);
  for (int i = 0; i < num_basins; ++i) {
    SynthBasinSpec s;
    s.basin_id = format_basin_id(i);
    bool distinct = false;
    while (!distinct) {
      s.runoff_coeff = std::exp(rng.uniform(std::log(0.02), std::log(0.6)));
      s.loss_fraction = rng.uniform(0.0, 0.6);
      distinct = true;
      for (const auto& o : fx.basins) {
        if (o.runoff_coeff == s.runoff_coeff && o.loss_fraction == s.loss_fraction) distinct = false;
      }
    }
    s.storage0 = (1.0 - s.loss_fraction) * kWetDayProbability * kMeanRainDepth / s.runoff_coeff;
    s.precip_seed = shared_forcing ? forcing_seed : derive_seed(seed, 0xF1, static_cast<std::uint64_t>(i));
    fx.basins.push_back(s);
  }
  return fx;
}

inline const std::vector<std::string>& synth_attribute_names() {
  static const std::vector<std::string> names{"runoff_coeff", "loss_fraction"};
  return names;
}

/// In-memory records equivalent to what emit_fixture writes and
/// load_collection reads back.
inline std::vector<BasinRecord> fixture_records(const SynthFixture& fx) {
  std::vector<BasinRecord> out;
  std::map<std::uint64_t, ForcingSeries> cache;
  for (const auto& s : fx.basins) {
    auto it = cache.find(s.precip_seed);
    if (it == cache.end()) it = cache.emplace(s.precip_seed, generate_forcing(s.precip_seed, fx.num_days, fx.start)).first;
    BasinRecord r;
    r.basin_id = s.basin_id;
    r.forcing = it->second;
    r.discharge = simulate_discharge(s, r.forcing);
    r.attributes = {synth_attribute_names(), {s.runoff_coeff, s.loss_fraction}};
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.basin_id < b.basin_id; });
  return out;
}

namespace detail {
inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + p.string());
}
}  // namespace detail

/// One CSV row per basin with every generator parameter at full precision.
inline std::string specs_csv(const SynthFixture& fx) {
  std::string out = "basin_id,runoff_coeff,loss_fraction,storage0,precip_seed\n";
  for (const auto& s : fx.basins) {
    out += s.basin_id + ',' + detail::format_real(s.runoff_coeff) + ',' + detail::format_real(s.loss_fraction) + ',' +
           detail::format_real(s.storage0) + ',' + std::to_string(s.precip_seed) + '\n';
  }
  return out;
}

/// Writes forcing/, discharge/ and attributes.csv (the two true generative
/// parameters per basin) under `root`.
inline void emit_fixture(const SynthFixture& fx, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root / "forcing", ec);
  fs::create_directories(root / "discharge", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + root.string() + ": " + ec.message());
  std::map<std::string, AttributeVector> table;
  for (const auto& r : fixture_records(fx)) {
    detail::write_text(root / "forcing" / (r.basin_id + ".txt"), serialize_forcing(r.forcing));
    detail::write_text(root / "discharge" / (r.basin_id + ".txt"), serialize_discharge(r.discharge));
    table.emplace(r.basin_id, r.attributes);
  }
  detail::write_text(root / "attributes.csv", serialize_attributes(table, synth_attribute_names()));
}

}  // namespace hydro_embed
