#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hydro_embed/date.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/pipeline.hpp"

namespace hydro_embed {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Site-identification mechanism; one value per row of the comparison table.
enum class Mode { None, Static, Embedding, Both };

inline bool uses_static(Mode m) { return m == Mode::Static || m == Mode::Both; }
inline bool uses_embedding(Mode m) { return m == Mode::Embedding || m == Mode::Both; }

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::Static: return "static";
    case Mode::Embedding: return "embedding";
    case Mode::Both: return "both";
  }
  return "none";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "none") return Mode::None;
  if (s == "static") return Mode::Static;
  if (s == "embedding") return Mode::Embedding;
  if (s == "both") return Mode::Both;
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + s + "' (expected none|static|embedding|both)");
}

struct TrainConfig {
  std::filesystem::path data_root;
  SplitSpec split;
  Mode mode = Mode::Embedding;
  int lookback = kDefaultLookback;
  int hidden_size = 256;
  int embedding_dim = 20;
  double dropout = 0.4;
  double epsilon = 0.1;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int batch_size = 256;
  int epochs = 30;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir = "checkpoints";

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (lookback < 1) bad("lookback must be >= 1");
    if (hidden_size < 1) bad("hidden_size must be >= 1");
    if (uses_embedding(mode) && embedding_dim < 1) bad("embedding_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
    if (!(epsilon > 0.0)) bad("epsilon must be > 0");
    if (!(lr >= 0.0)) bad("lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) bad("adam_eps must be > 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (epochs < 0) bad("epochs must be >= 0");
    try {
      split.validate(lookback);
    } catch (const Error& e) {
      bad(e.what());
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

namespace detail {

inline std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return std::string(trim(hash == std::string::npos ? std::string_view(line) : std::string_view(line).substr(0, hash)));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  char tail = 0;
  if (!(in >> out) || (in >> tail)) throw Error(ErrorCode::InvalidConfig, key + ": cannot parse '" + value + "'");
  return out;
}

inline double parse_real_value(const std::string& key, const std::string& value) {
  const auto v = to_real(value);
  if (!v) throw Error(ErrorCode::InvalidConfig, key + ": cannot parse '" + value + "'");
  return *v;
}

}  // namespace detail

/// Keys written by a run manifest alongside the training configuration.
inline bool is_manifest_key(const std::string& key) {
  return key == "toolkit_version" || key == "start_time" || key == "end_time" || key == "data_fingerprint";
}

/// Sets one configuration entry from its textual value.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto date = [&](DateStamp& d) {
    try {
      d = parse_iso_date(value);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidConfig, key + ": " + e.what());
    }
  };
  if (key == "data_root") cfg.data_root = value;
  else if (key == "train_start") date(cfg.split.train_start);
  else if (key == "train_end") date(cfg.split.train_end);
  else if (key == "eval_start") date(cfg.split.eval_start);
  else if (key == "eval_end") date(cfg.split.eval_end);
  else if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "lookback") cfg.lookback = detail::parse_number<int>(key, value);
  else if (key == "hidden_size") cfg.hidden_size = detail::parse_number<int>(key, value);
  else if (key == "embedding_dim") cfg.embedding_dim = detail::parse_number<int>(key, value);
  else if (key == "dropout") cfg.dropout = detail::parse_real_value(key, value);
  else if (key == "epsilon") cfg.epsilon = detail::parse_real_value(key, value);
  else if (key == "lr") cfg.lr = detail::parse_real_value(key, value);
  else if (key == "beta1") cfg.beta1 = detail::parse_real_value(key, value);
  else if (key == "beta2") cfg.beta2 = detail::parse_real_value(key, value);
  else if (key == "adam_eps") cfg.adam_eps = detail::parse_real_value(key, value);
  else if (key == "clip_norm") cfg.clip_norm = detail::parse_real_value(key, value);
  else if (key == "batch_size") cfg.batch_size = detail::parse_number<int>(key, value);
  else if (key == "epochs") cfg.epochs = detail::parse_number<int>(key, value);
  else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(key, value);
  else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
  else if (!is_manifest_key(key)) throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
}

/// Flat `key = value` lines; `#` starts a comment. Later keys win.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = detail::strip_comment(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(detail::trim(std::string_view(body).substr(0, eq)));
    const std::string value(detail::trim(std::string_view(body).substr(eq + 1)));
    set_config_value(cfg, key, value);
  }
  return cfg;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path.string());
  return parse_config(in);
}

/// Every field, defaults expanded, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  using detail::format_real;
  return {
      {"data_root", c.data_root.string()},
      {"train_start", to_string(c.split.train_start)},
      {"train_end", to_string(c.split.train_end)},
      {"eval_start", to_string(c.split.eval_start)},
      {"eval_end", to_string(c.split.eval_end)},
      {"mode", to_string(c.mode)},
      {"lookback", std::to_string(c.lookback)},
      {"hidden_size", std::to_string(c.hidden_size)},
      {"embedding_dim", std::to_string(c.embedding_dim)},
      {"dropout", format_real(c.dropout)},
      {"epsilon", format_real(c.epsilon)},
      {"lr", format_real(c.lr)},
      {"beta1", format_real(c.beta1)},
      {"beta2", format_real(c.beta2)},
      {"adam_eps", format_real(c.adam_eps)},
      {"clip_norm", format_real(c.clip_norm)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"seed", std::to_string(c.seed)},
      {"checkpoint_dir", c.checkpoint_dir.string()},
  };
}

inline std::string serialize_config(const TrainConfig& c) {
  std::ostringstream out;
  for (const auto& [k, v] : config_entries(c)) out << k << " = " << v << '\n';
  return out.str();
}

}  // namespace hydro_embed
