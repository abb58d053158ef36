#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "hydro_embed/date.hpp"

namespace test_util {

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hydro_embed_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string date_fields(const hydro_embed::DateStamp& d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d %02d %02d", d.year, d.month, d.day);
  return buf;
}

/// Forcing file text with `n` rows of deterministic values.
inline std::string forcing_text(hydro_embed::DateStamp start, int n, double base = 1.0) {
  std::ostringstream out;
  out << "YYYY MM DD PRCP TMIN TMAX SRAD VP\n";
  for (int i = 0; i < n; ++i) {
    out << date_fields(hydro_embed::add_days(start, i)) << ' ' << base + (i % 7) << ' ' << -2 + (i % 5) << ' '
        << 10 + (i % 3) << ' ' << 150 + (i % 11) << ' ' << 800 + (i % 13) << '\n';
  }
  return out.str();
}

inline std::string discharge_text(hydro_embed::DateStamp start, int n, double base = 1.0) {
  std::ostringstream out;
  out << "YYYY MM DD QOBS\n";
  for (int i = 0; i < n; ++i) out << date_fields(hydro_embed::add_days(start, i)) << ' ' << base + 0.25 * (i % 9) << '\n';
  return out.str();
}

}  // namespace test_util
