#pragma once

#include <zlib.h>

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hydro_embed/config.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/net.hpp"
#include "hydro_embed/optim.hpp"
#include "hydro_embed/pipeline.hpp"

namespace hydro_embed {

inline constexpr char kCheckpointMagic[4] = {'H', 'Y', 'E', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or evaluate a model.
struct Checkpoint {
  ModelConfig model;
  Mode mode = Mode::None;
  int lookback = kDefaultLookback;
  SplitSpec split;
  std::uint64_t seed = 0;
  double epsilon = 0.1;
  Eigen::VectorXd basin_flow_std;
  ModelParams params;
  OptState opt;
  Standardizers standardizers;
  std::vector<std::string> basin_ids;  // position == basin index
  int epoch = 0;                       // completed epochs
  std::vector<double> loss_log;        // mean training loss per completed epoch

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.model == b.model && a.mode == b.mode && a.lookback == b.lookback && a.split == b.split &&
           a.seed == b.seed && a.epsilon == b.epsilon && a.basin_flow_std.size() == b.basin_flow_std.size() &&
           a.basin_flow_std == b.basin_flow_std && a.params == b.params && a.opt == b.opt &&
           a.standardizers == b.standardizers && a.basin_ids == b.basin_ids && a.epoch == b.epoch &&
           a.loss_log == b.loss_log;
  }
};

namespace detail {

enum class DType : std::uint8_t { F64 = 1, I64 = 2, Utf8 = 3 };

struct Block {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::string text;
};

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

template <class T>
T get_le(const char* p) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

class BlockWriter {
 public:
  BlockWriter() {
    buf_.append(kCheckpointMagic, 4);
    put_le<std::uint32_t>(buf_, kCheckpointVersion);
  }

  void header(const std::string& name, DType dtype, const std::vector<std::uint64_t>& dims) {
    put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(name.size()));
    buf_.append(name);
    put_le<std::uint8_t>(buf_, static_cast<std::uint8_t>(dtype));
    put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_le<std::uint64_t>(buf_, d);
  }

  void f64(const std::string& name, double v) {
    header(name, DType::F64, {});
    put_le<double>(buf_, v);
  }
  void i64(const std::string& name, std::int64_t v) {
    header(name, DType::I64, {});
    put_le<std::int64_t>(buf_, v);
  }
  void vector(const std::string& name, const Eigen::VectorXd& v) {
    header(name, DType::F64, {static_cast<std::uint64_t>(v.size())});
    for (Eigen::Index i = 0; i < v.size(); ++i) put_le<double>(buf_, v(i));
  }
  void vector(const std::string& name, const std::vector<double>& v) {
    header(name, DType::F64, {v.size()});
    for (double x : v) put_le<double>(buf_, x);
  }
  void ints(const std::string& name, const std::vector<std::int64_t>& v) {
    header(name, DType::I64, {v.size()});
    for (auto x : v) put_le<std::int64_t>(buf_, x);
  }
  void matrix(const std::string& name, const Eigen::MatrixXd& m) {
    header(name, DType::F64, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(buf_, m(r, c));
  }
  void text(const std::string& name, const std::string& s) {
    header(name, DType::Utf8, {s.size()});
    buf_.append(s);
  }

  std::string finish() && {
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(buf_.size()));
    put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(crc));
    return std::move(buf_);
  }

 private:
  std::string buf_;
};

inline std::map<std::string, Block> read_blocks(const std::string& bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::CorruptFile, "checkpoint too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw Error(ErrorCode::VersionMismatch, "bad magic bytes");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  const std::size_t body_end = bytes.size() - 4;
  const auto stored = get_le<std::uint32_t>(bytes.data() + body_end);
  const auto actual = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body_end)));
  if (stored != actual) throw Error(ErrorCode::CorruptFile, "CRC32 mismatch");

  std::map<std::string, Block> blocks;
  std::size_t at = 8;
  auto need = [&](std::size_t n) {
    if (at + n > body_end) throw Error(ErrorCode::CorruptFile, "block overruns file");
  };
  while (at < body_end) {
    need(4);
    const auto name_len = get_le<std::uint32_t>(bytes.data() + at);
    at += 4;
    need(name_len + 5);
    std::string name = bytes.substr(at, name_len);
    at += name_len;
    Block b;
    b.dtype = static_cast<DType>(get_le<std::uint8_t>(bytes.data() + at));
    at += 1;
    const auto rank = get_le<std::uint32_t>(bytes.data() + at);
    at += 4;
    need(8ull * rank);
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      b.dims.push_back(get_le<std::uint64_t>(bytes.data() + at));
      count *= b.dims.back();
      at += 8;
    }
    switch (b.dtype) {
      case DType::F64:
        need(8 * count);
        b.f64.resize(count);
        for (std::uint64_t i = 0; i < count; ++i, at += 8) b.f64[i] = get_le<double>(bytes.data() + at);
        break;
      case DType::I64:
        need(8 * count);
        b.i64.resize(count);
        for (std::uint64_t i = 0; i < count; ++i, at += 8) b.i64[i] = get_le<std::int64_t>(bytes.data() + at);
        break;
      case DType::Utf8:
        need(count);
        b.text = bytes.substr(at, count);
        at += count;
        break;
      default:
        throw Error(ErrorCode::CorruptFile, "unknown dtype in block " + name);
    }
    blocks.emplace(std::move(name), std::move(b));
  }
  return blocks;
}

class BlockReader {
 public:
  explicit BlockReader(std::map<std::string, Block> blocks) : blocks_(std::move(blocks)) {}

  bool has(const std::string& name) const { return blocks_.count(name) != 0; }

  const Block& get(const std::string& name, DType dtype) const {
    const auto it = blocks_.find(name);
    if (it == blocks_.end()) throw Error(ErrorCode::CorruptFile, "missing block " + name);
    if (it->second.dtype != dtype) throw Error(ErrorCode::CorruptFile, "block " + name + " has wrong dtype");
    return it->second;
  }

  double f64(const std::string& name) const {
    const auto& b = get(name, DType::F64);
    if (b.f64.size() != 1) throw Error(ErrorCode::CorruptFile, name + " is not a scalar");
    return b.f64[0];
  }
  std::int64_t i64(const std::string& name) const {
    const auto& b = get(name, DType::I64);
    if (b.i64.size() != 1) throw Error(ErrorCode::CorruptFile, name + " is not a scalar");
    return b.i64[0];
  }
  std::vector<double> list(const std::string& name) const { return get(name, DType::F64).f64; }
  Eigen::VectorXd vector(const std::string& name) const {
    const auto& v = get(name, DType::F64).f64;
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  std::vector<std::int64_t> ints(const std::string& name) const { return get(name, DType::I64).i64; }
  Eigen::MatrixXd matrix(const std::string& name) const {
    const auto& b = get(name, DType::F64);
    if (b.dims.size() != 2) throw Error(ErrorCode::CorruptFile, name + " is not a matrix");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(b.dims[0]), static_cast<Eigen::Index>(b.dims[1]));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = b.f64[i++];
    return m;
  }
  std::string text(const std::string& name) const { return get(name, DType::Utf8).text; }

 private:
  std::map<std::string, Block> blocks_;
};

inline void write_params(BlockWriter& w, const std::string& prefix, const ModelParams& p) {
  w.matrix(prefix + ".w_ih", p.w_ih);
  w.matrix(prefix + ".w_hh", p.w_hh);
  w.vector(prefix + ".bias", p.bias);
  w.vector(prefix + ".head_w", p.head_w);
  w.f64(prefix + ".head_b", p.head_b);
  w.matrix(prefix + ".embed", p.embed);
}

inline ModelParams read_params(const BlockReader& r, const std::string& prefix) {
  ModelParams p;
  p.w_ih = r.matrix(prefix + ".w_ih");
  p.w_hh = r.matrix(prefix + ".w_hh");
  p.bias = r.vector(prefix + ".bias");
  p.head_w = r.vector(prefix + ".head_w");
  p.head_b = r.f64(prefix + ".head_b");
  p.embed = r.matrix(prefix + ".embed");
  return p;
}

inline std::vector<std::int64_t> split_to_ints(const SplitSpec& s) {
  std::vector<std::int64_t> out;
  for (const auto& d : {s.train_start, s.train_end, s.eval_start, s.eval_end}) {
    out.insert(out.end(), {d.year, d.month, d.day});
  }
  return out;
}

inline SplitSpec split_from_ints(const std::vector<std::int64_t>& v) {
  if (v.size() != 12) throw Error(ErrorCode::CorruptFile, "split block must hold 12 integers");
  auto at = [&](std::size_t i) {
    return DateStamp{static_cast<int>(v[i]), static_cast<int>(v[i + 1]), static_cast<int>(v[i + 2])};
  };
  return {at(0), at(3), at(6), at(9)};
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  detail::BlockWriter w;
  w.i64("model.dynamic_dim", ck.model.dynamic_dim);
  w.i64("model.static_dim", ck.model.static_dim);
  w.i64("model.hidden_size", ck.model.hidden_size);
  w.i64("model.embedding_dim", ck.model.embedding_dim);
  w.i64("model.num_basins", ck.model.num_basins);
  w.f64("model.dropout_rate", ck.model.dropout_rate);
  w.i64("model.use_static", ck.model.use_static ? 1 : 0);
  w.i64("model.use_embedding", ck.model.use_embedding ? 1 : 0);
  w.text("run.mode", to_string(ck.mode));
  w.i64("run.lookback", ck.lookback);
  w.ints("run.split", detail::split_to_ints(ck.split));
  w.i64("run.seed", static_cast<std::int64_t>(ck.seed));
  w.i64("run.epoch", ck.epoch);
  w.vector("run.loss_log", ck.loss_log);
  w.f64("loss.epsilon", ck.epsilon);
  w.vector("loss.basin_flow_std", ck.basin_flow_std);
  detail::write_params(w, "params", ck.params);
  w.i64("opt.step_count", ck.opt.step_count);
  w.f64("opt.lr", ck.opt.lr);
  w.f64("opt.beta1", ck.opt.beta1);
  w.f64("opt.beta2", ck.opt.beta2);
  w.f64("opt.adam_eps", ck.opt.adam_eps);
  w.f64("opt.clip_norm", ck.opt.clip_norm);
  detail::write_params(w, "opt.m", ck.opt.m);
  detail::write_params(w, "opt.v", ck.opt.v);
  w.vector("std.dynamic.mean", ck.standardizers.dynamic.means);
  w.vector("std.dynamic.std", ck.standardizers.dynamic.stds);
  if (ck.standardizers.static_attrs) {
    w.vector("std.static.mean", ck.standardizers.static_attrs->means);
    w.vector("std.static.std", ck.standardizers.static_attrs->stds);
  }
  w.vector("std.target.mean", ck.standardizers.target.means);
  w.vector("std.target.std", ck.standardizers.target.stds);
  std::string ids;
  for (const auto& id : ck.basin_ids) ids += id + '\n';
  w.text("basin_ids", ids);
  return std::move(w).finish();
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const detail::BlockReader r(detail::read_blocks(bytes));
  Checkpoint ck;
  ck.model.dynamic_dim = static_cast<int>(r.i64("model.dynamic_dim"));
  ck.model.static_dim = static_cast<int>(r.i64("model.static_dim"));
  ck.model.hidden_size = static_cast<int>(r.i64("model.hidden_size"));
  ck.model.embedding_dim = static_cast<int>(r.i64("model.embedding_dim"));
  ck.model.num_basins = static_cast<int>(r.i64("model.num_basins"));
  ck.model.dropout_rate = r.f64("model.dropout_rate");
  ck.model.use_static = r.i64("model.use_static") != 0;
  ck.model.use_embedding = r.i64("model.use_embedding") != 0;
  try {
    ck.mode = parse_mode(r.text("run.mode"));
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptFile, e.what());
  }
  ck.lookback = static_cast<int>(r.i64("run.lookback"));
  ck.split = detail::split_from_ints(r.ints("run.split"));
  ck.seed = static_cast<std::uint64_t>(r.i64("run.seed"));
  ck.epoch = static_cast<int>(r.i64("run.epoch"));
  ck.loss_log = r.list("run.loss_log");
  ck.epsilon = r.f64("loss.epsilon");
  ck.basin_flow_std = r.vector("loss.basin_flow_std");
  ck.params = detail::read_params(r, "params");
  ck.opt.step_count = r.i64("opt.step_count");
  ck.opt.lr = r.f64("opt.lr");
  ck.opt.beta1 = r.f64("opt.beta1");
  ck.opt.beta2 = r.f64("opt.beta2");
  ck.opt.adam_eps = r.f64("opt.adam_eps");
  ck.opt.clip_norm = r.f64("opt.clip_norm");
  ck.opt.m = detail::read_params(r, "opt.m");
  ck.opt.v = detail::read_params(r, "opt.v");
  ck.standardizers.dynamic = {r.vector("std.dynamic.mean"), r.vector("std.dynamic.std")};
  if (r.has("std.static.mean")) {
    ck.standardizers.static_attrs = Standardizer{r.vector("std.static.mean"), r.vector("std.static.std")};
  }
  ck.standardizers.target = {r.vector("std.target.mean"), r.vector("std.target.std")};
  std::istringstream ids(r.text("basin_ids"));
  for (std::string id; std::getline(ids, id);) ck.basin_ids.push_back(id);

  const ModelParams expect = ModelParams::zeros(ck.model);
  auto same_shape = [&](const ModelParams& p) {
    return p.w_ih.rows() == expect.w_ih.rows() && p.w_ih.cols() == expect.w_ih.cols() &&
           p.w_hh.rows() == expect.w_hh.rows() && p.w_hh.cols() == expect.w_hh.cols() &&
           p.bias.size() == expect.bias.size() && p.head_w.size() == expect.head_w.size() &&
           p.embed.rows() == expect.embed.rows() && p.embed.cols() == expect.embed.cols();
  };
  if (!same_shape(ck.params) || !same_shape(ck.opt.m) || !same_shape(ck.opt.v)) {
    throw Error(ErrorCode::CorruptFile, "parameter shapes disagree with the stored model config");
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot move checkpoint into place: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace hydro_embed
