#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hydro_embed/error.hpp"
#include "hydro_embed/pipeline.hpp"
#include "hydro_embed/rng.hpp"

namespace hydro_embed {

struct ModelConfig {
  int dynamic_dim = kNumForcingFeatures;
  int static_dim = 0;
  int hidden_size = 256;
  int embedding_dim = 20;
  int num_basins = 0;
  double dropout_rate = 0.4;
  bool use_static = false;
  bool use_embedding = false;

  /// Width of the per-basin block appended to every timestep.
  int constant_dim() const { return (use_static ? static_dim : 0) + (use_embedding ? embedding_dim : 0); }
  int input_dim() const { return dynamic_dim + constant_dim(); }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
    if (hidden_size < 1) bad("hidden_size must be >= 1");
    if (dynamic_dim < 0 || static_dim < 0) bad("feature dimensions must be >= 0");
    if (use_embedding && (embedding_dim < 1 || num_basins < 1)) bad("embedding needs embedding_dim >= 1 and num_basins >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Gate rows of w_ih, w_hh and bias are stacked as [input, forget,
/// candidate, output], H rows each. The canonical flat order is w_ih, w_hh,
/// bias, head_w, head_b, embed, matrices row-major.
struct ModelParams {
  Eigen::MatrixXd w_ih;    // 4H x D
  Eigen::MatrixXd w_hh;    // 4H x H
  Eigen::VectorXd bias;    // 4H
  Eigen::VectorXd head_w;  // H
  double head_b = 0.0;
  Eigen::MatrixXd embed;   // n x k when embeddings are enabled, else 0 x 0

  static ModelParams zeros(const ModelConfig& cfg) {
    const int h = cfg.hidden_size;
    ModelParams p;
    p.w_ih = Eigen::MatrixXd::Zero(4 * h, cfg.input_dim());
    p.w_hh = Eigen::MatrixXd::Zero(4 * h, h);
    p.bias = Eigen::VectorXd::Zero(4 * h);
    p.head_w = Eigen::VectorXd::Zero(h);
    p.head_b = 0.0;
    p.embed = cfg.use_embedding ? Eigen::MatrixXd::Zero(cfg.num_basins, cfg.embedding_dim) : Eigen::MatrixXd(0, 0);
    return p;
  }

  Eigen::Index size() const {
    return w_ih.size() + w_hh.size() + bias.size() + head_w.size() + 1 + embed.size();
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(size());
    Eigen::Index at = 0;
    auto put_matrix = [&](const Eigen::MatrixXd& m) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out(at++) = m(r, c);
    };
    put_matrix(w_ih);
    put_matrix(w_hh);
    out.segment(at, bias.size()) = bias;
    at += bias.size();
    out.segment(at, head_w.size()) = head_w;
    at += head_w.size();
    out(at++) = head_b;
    put_matrix(embed);
    return out;
  }

  /// Inverse of flatten(); shapes are taken from *this.
  void assign_flat(const Eigen::VectorXd& flat) {
    if (flat.size() != size()) throw Error(ErrorCode::ShapeMismatch, "flat parameter vector has wrong length");
    Eigen::Index at = 0;
    auto take_matrix = [&](Eigen::MatrixXd& m) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat(at++);
    };
    take_matrix(w_ih);
    take_matrix(w_hh);
    bias = flat.segment(at, bias.size());
    at += bias.size();
    head_w = flat.segment(at, head_w.size());
    at += head_w.size();
    head_b = flat(at++);
    take_matrix(embed);
  }

  bool all_finite() const {
    return w_ih.allFinite() && w_hh.allFinite() && bias.allFinite() && head_w.allFinite() &&
           std::isfinite(head_b) && embed.allFinite();
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return same(a.w_ih, b.w_ih) && same(a.w_hh, b.w_hh) && same(a.bias, b.bias) &&
           same(a.head_w, b.head_w) && a.head_b == b.head_b && same(a.embed, b.embed);
  }
};

/// Gradients share the parameter layout; embedding rows of basins absent from
/// a batch stay exactly zero.
using Gradients = ModelParams;

/// Applies fn(a_field, b_field, ...) to every array-valued field in order.
/// head_b is passed as a 1x1 map so the same code handles it.
template <class Fn, class... Ps>
void for_each_field(Fn&& fn, Ps&... ps) {
  fn(ps.w_ih...);
  fn(ps.w_hh...);
  fn(ps.bias...);
  fn(ps.head_w...);
  {
    auto scalar = [](auto& p) { return Eigen::Map<std::conditional_t<std::is_const_v<std::remove_reference_t<decltype(p)>>, const Eigen::VectorXd, Eigen::VectorXd>>(&p.head_b, 1); };
    fn(scalar(ps)...);
  }
  fn(ps.embed...);
}

/// Uniform(-1/sqrt(H), 1/sqrt(H)) for the LSTM and head weights, zero biases
/// with the forget slice at 1, Uniform(-1/sqrt(k), 1/sqrt(k)) embeddings.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p = ModelParams::zeros(cfg);
  Rng rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_size));
  auto fill = [&](Eigen::MatrixXd& m, double bound) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(p.w_ih, a);
  fill(p.w_hh, a);
  p.bias.segment(cfg.hidden_size, cfg.hidden_size).setOnes();
  for (Eigen::Index i = 0; i < p.head_w.size(); ++i) p.head_w(i) = a * (2.0 * rng.uniform() - 1.0);
  if (cfg.use_embedding) fill(p.embed, 1.0 / std::sqrt(static_cast<double>(cfg.embedding_dim)));
  return p;
}

/// Network input for B sequences of equal length T.
///
/// `steps[t]` holds the per-timestep features (rows x B). `constant` holds
/// features repeated at every timestep (static attributes, then the
/// embedding); they occupy the trailing columns of w_ih. Keeping them apart
/// lets the forward pass project them once per sequence.
struct SequenceBatch {
  std::vector<Eigen::MatrixXd> steps;
  Eigen::MatrixXd constant;
  std::vector<int> basin_indices;  // used to scatter embedding gradients; may be empty

  Eigen::Index batch_size() const { return steps.empty() ? 0 : steps.front().cols(); }
  Eigen::Index length() const { return static_cast<Eigen::Index>(steps.size()); }
};

/// Builds the training-path input: dynamic window per step, constant block
/// [static attrs | embed row].
inline SequenceBatch assemble_input(std::span<const Sample* const> samples, const ModelParams& params,
                                    const ModelConfig& cfg) {
  SequenceBatch batch;
  if (samples.empty()) return batch;
  const auto b = static_cast<Eigen::Index>(samples.size());
  const int lookback = samples.front()->lookback;
  batch.steps.assign(static_cast<std::size_t>(lookback), Eigen::MatrixXd(cfg.dynamic_dim, b));
  batch.constant.resize(cfg.constant_dim(), b);
  batch.basin_indices.resize(samples.size());
  for (Eigen::Index j = 0; j < b; ++j) {
    const Sample& s = *samples[static_cast<std::size_t>(j)];
    if (s.lookback != lookback) throw Error(ErrorCode::ShapeMismatch, "samples in a batch must share lookback");
    const auto w = s.window();
    if (w.rows() != cfg.dynamic_dim) throw Error(ErrorCode::ShapeMismatch, "dynamic feature count differs from model");
    for (int t = 0; t < lookback; ++t) batch.steps[static_cast<std::size_t>(t)].col(j) = w.col(t);
    Eigen::Index row = 0;
    if (cfg.use_static) {
      if (!s.static_attrs || s.static_attrs->size() != cfg.static_dim) {
        throw Error(ErrorCode::ShapeMismatch, "sample lacks static attributes of width " + std::to_string(cfg.static_dim));
      }
      batch.constant.block(row, j, cfg.static_dim, 1) = *s.static_attrs;
      row += cfg.static_dim;
    }
    if (cfg.use_embedding) {
      if (s.basin_index < 0 || s.basin_index >= params.embed.rows()) {
        throw Error(ErrorCode::BasinIndexOutOfRange, "basin index " + std::to_string(s.basin_index) + " with " +
                                                         std::to_string(params.embed.rows()) + " embedding rows");
      }
      batch.constant.block(row, j, cfg.embedding_dim, 1) = params.embed.row(s.basin_index).transpose();
    }
    batch.basin_indices[static_cast<std::size_t>(j)] = s.basin_index;
  }
  return batch;
}

inline SequenceBatch assemble_input(const Sample& sample, const ModelParams& params, const ModelConfig& cfg) {
  const Sample* ptr = &sample;
  return assemble_input(std::span<const Sample* const>(&ptr, 1), params, cfg);
}

/// The literal T x D design matrix: row t = [dynamic_t | static | embed].
inline Eigen::MatrixXd assemble_rows(const Sample& sample, const ModelParams& params, const ModelConfig& cfg) {
  const SequenceBatch b = assemble_input(sample, params, cfg);
  Eigen::MatrixXd rows(b.length(), cfg.input_dim());
  for (Eigen::Index t = 0; t < b.length(); ++t) {
    rows.block(t, 0, 1, cfg.dynamic_dim) = b.steps[static_cast<std::size_t>(t)].transpose();
    rows.block(t, cfg.dynamic_dim, 1, cfg.constant_dim()) = b.constant.transpose();
  }
  return rows;
}

/// Wraps a T x D matrix as a single sequence with every column per-step.
inline SequenceBatch sequence_from_rows(const Eigen::MatrixXd& rows) {
  SequenceBatch b;
  for (Eigen::Index t = 0; t < rows.rows(); ++t) b.steps.emplace_back(rows.row(t).transpose());
  b.constant.resize(0, 1);
  return b;
}

/// Activations cached by forward() for one backward() call. Column block t
/// (width B) of each matrix belongs to timestep t; `hidden` and `cell` carry
/// an extra leading block holding the zero initial state.
struct ForwardTape {
  Eigen::Index length = 0;
  Eigen::Index batch = 0;
  Eigen::MatrixXd inputs;     // D_step x (T*B)
  Eigen::MatrixXd constant;   // D_const x B
  std::vector<int> basin_indices;
  Eigen::MatrixXd gates;      // 4H x (T*B), post-activation i, f, g, o
  Eigen::MatrixXd cell;       // H x ((T+1)*B)
  Eigen::MatrixXd cell_tanh;  // H x (T*B)
  Eigen::MatrixXd hidden;     // H x ((T+1)*B)
  Eigen::MatrixXd head_input; // H x B, h_T after dropout
  std::optional<Eigen::MatrixXd> dropout_mask;
  bool consumed = false;
};

struct ForwardResult {
  Eigen::VectorXd predictions;
  ForwardTape tape;
};

namespace detail {

template <class Derived>
inline auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 / (1.0 + (-x).exp());
}

// 1 - 2 / (1 + e^{2x}): one vectorized exp instead of a scalar std::tanh
// call per element. Absolute error stays near 1 ulp of 1 and the result never
// leaves [-1, 1].
template <class Derived>
inline auto tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

}  // namespace detail

/// Runs the LSTM over every sequence in `input` from zero state and applies
/// the linear head to h_T. With a 0/1 `dropout_mask` (H x B) the head input
/// is mask * h_T / (1 - p); without one the head sees h_T unchanged.
inline ForwardResult forward(const SequenceBatch& input, const ModelParams& params, const ModelConfig& cfg,
                             const Eigen::MatrixXd* dropout_mask = nullptr) {
  const Eigen::Index h = cfg.hidden_size;
  const Eigen::Index t_len = input.length();
  const Eigen::Index b = input.batch_size();
  if (t_len < 1 || b < 1) throw Error(ErrorCode::ShapeMismatch, "empty input sequence");
  const Eigen::Index d_step = input.steps.front().rows();
  const Eigen::Index d_const = input.constant.rows();
  if (d_step + d_const != params.w_ih.cols() || params.w_ih.rows() != 4 * h) {
    throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(d_step + d_const) + " vs w_ih " +
                                              std::to_string(params.w_ih.rows()) + "x" + std::to_string(params.w_ih.cols()));
  }
  if (d_const > 0 && input.constant.cols() != b) throw Error(ErrorCode::ShapeMismatch, "constant block width");

  ForwardResult out;
  ForwardTape& tape = out.tape;
  tape.length = t_len;
  tape.batch = b;
  tape.inputs.resize(d_step, t_len * b);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto& x = input.steps[static_cast<std::size_t>(t)];
    if (x.rows() != d_step || x.cols() != b) throw Error(ErrorCode::ShapeMismatch, "ragged timestep input");
    tape.inputs.middleCols(t * b, b) = x;
  }
  tape.constant = input.constant;
  tape.basin_indices = input.basin_indices;

  // Everything that does not depend on h_{t-1} is projected in one product.
  Eigen::MatrixXd pre = params.w_ih.leftCols(d_step) * tape.inputs;
  {
    Eigen::MatrixXd fixed = params.bias.replicate(1, b);
    if (d_const > 0) fixed.noalias() += params.w_ih.rightCols(d_const) * input.constant;
    for (Eigen::Index t = 0; t < t_len; ++t) pre.middleCols(t * b, b) += fixed;
  }

  tape.gates.resize(4 * h, t_len * b);
  tape.cell.resize(h, (t_len + 1) * b);
  tape.cell_tanh.resize(h, t_len * b);
  tape.hidden.resize(h, (t_len + 1) * b);
  tape.cell.leftCols(b).setZero();
  tape.hidden.leftCols(b).setZero();

  Eigen::MatrixXd z(4 * h, b);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    z = pre.middleCols(t * b, b);
    z.noalias() += params.w_hh * tape.hidden.middleCols(t * b, b);
    auto gates = tape.gates.middleCols(t * b, b);
    gates.topRows(2 * h) = detail::sigmoid(z.topRows(2 * h).array()).matrix();
    gates.middleRows(2 * h, h) = detail::tanh(z.middleRows(2 * h, h).array()).matrix();
    gates.bottomRows(h) = detail::sigmoid(z.bottomRows(h).array()).matrix();

    const auto i_g = gates.topRows(h).array();
    const auto f_g = gates.middleRows(h, h).array();
    const auto g_g = gates.middleRows(2 * h, h).array();
    const auto o_g = gates.bottomRows(h).array();
    tape.cell.middleCols((t + 1) * b, b) = (f_g * tape.cell.middleCols(t * b, b).array() + i_g * g_g).matrix();
    tape.cell_tanh.middleCols(t * b, b) = detail::tanh(tape.cell.middleCols((t + 1) * b, b).array()).matrix();
    tape.hidden.middleCols((t + 1) * b, b) = (o_g * tape.cell_tanh.middleCols(t * b, b).array()).matrix();
  }

  tape.head_input = tape.hidden.rightCols(b);
  if (dropout_mask) {
    if (dropout_mask->rows() != h || dropout_mask->cols() != b) throw Error(ErrorCode::ShapeMismatch, "dropout mask shape");
    tape.dropout_mask = *dropout_mask;
    tape.head_input = (tape.head_input.array() * dropout_mask->array()).matrix() / (1.0 - cfg.dropout_rate);
  }
  out.predictions = (params.head_w.transpose() * tape.head_input).transpose();
  out.predictions.array() += params.head_b;
  if (!out.predictions.allFinite()) {
    throw Error(ErrorCode::NonFiniteActivation, "non-finite prediction");
  }
  return out;
}

/// Convenience overload for a single T x D sequence.
inline ForwardResult forward(const Eigen::MatrixXd& rows, const ModelParams& params, const ModelConfig& cfg,
                             const Eigen::VectorXd* dropout_mask = nullptr) {
  if (dropout_mask) {
    const Eigen::MatrixXd mask = *dropout_mask;
    return forward(sequence_from_rows(rows), params, cfg, &mask);
  }
  return forward(sequence_from_rows(rows), params, cfg);
}

struct BackwardResult {
  Gradients grads;
  std::vector<Eigen::MatrixXd> d_steps;  // per-step input gradients, only if requested
  Eigen::MatrixXd d_constant;            // D_const x B
};

/// Exact backpropagation through time for the sequences recorded in `tape`.
/// `upstream(j)` is d(loss)/d(prediction j). The tape is consumed.
inline BackwardResult backward(ForwardTape& tape, const Eigen::VectorXd& upstream, const ModelParams& params,
                               const ModelConfig& cfg, bool want_step_grads = false) {
  if (tape.consumed) throw Error(ErrorCode::TapeReuse, "forward tape already used by a backward pass");
  tape.consumed = true;
  const Eigen::Index h = cfg.hidden_size;
  const Eigen::Index t_len = tape.length;
  const Eigen::Index b = tape.batch;
  const Eigen::Index d_step = tape.inputs.rows();
  const Eigen::Index d_const = tape.constant.rows();
  if (upstream.size() != b) throw Error(ErrorCode::ShapeMismatch, "upstream gradient length");

  BackwardResult out;
  Gradients& g = out.grads;
  g.w_ih = Eigen::MatrixXd::Zero(params.w_ih.rows(), params.w_ih.cols());
  g.w_hh = Eigen::MatrixXd::Zero(params.w_hh.rows(), params.w_hh.cols());
  g.embed = Eigen::MatrixXd::Zero(params.embed.rows(), params.embed.cols());

  g.head_w = tape.head_input * upstream;
  g.head_b = upstream.sum();
  g.bias.resize(4 * h);

  Eigen::MatrixXd dh = params.head_w * upstream.transpose();  // H x B
  if (tape.dropout_mask) dh = (dh.array() * tape.dropout_mask->array()).matrix() / (1.0 - cfg.dropout_rate);

  Eigen::MatrixXd d_pre(4 * h, t_len * b);
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd dc(h, b);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    const auto gates = tape.gates.middleCols(t * b, b);
    const auto i_g = gates.topRows(h).array();
    const auto f_g = gates.middleRows(h, h).array();
    const auto g_g = gates.middleRows(2 * h, h).array();
    const auto o_g = gates.bottomRows(h).array();
    const auto tc = tape.cell_tanh.middleCols(t * b, b).array();
    const auto c_prev = tape.cell.middleCols(t * b, b).array();

    dc = (dh.array() * o_g * (1.0 - tc * tc) + dc_next.array()).matrix();
    auto dz = d_pre.middleCols(t * b, b);
    dz.topRows(h) = (dc.array() * g_g * i_g * (1.0 - i_g)).matrix();
    dz.middleRows(h, h) = (dc.array() * c_prev * f_g * (1.0 - f_g)).matrix();
    dz.middleRows(2 * h, h) = (dc.array() * i_g * (1.0 - g_g * g_g)).matrix();
    dz.bottomRows(h) = (dh.array() * tc * o_g * (1.0 - o_g)).matrix();
    dc_next = (dc.array() * f_g).matrix();
    if (t > 0) dh.noalias() = params.w_hh.transpose() * dz;
  }

  g.w_ih.leftCols(d_step).noalias() = d_pre * tape.inputs.transpose();
  g.w_hh.noalias() = d_pre * tape.hidden.leftCols(t_len * b).transpose();
  Eigen::MatrixXd d_pre_sum = Eigen::MatrixXd::Zero(4 * h, b);
  for (Eigen::Index t = 0; t < t_len; ++t) d_pre_sum += d_pre.middleCols(t * b, b);
  g.bias = d_pre_sum.rowwise().sum();

  if (d_const > 0) {
    g.w_ih.rightCols(d_const).noalias() = d_pre_sum * tape.constant.transpose();
    out.d_constant.noalias() = params.w_ih.rightCols(d_const).transpose() * d_pre_sum;
  } else {
    out.d_constant.resize(0, b);
  }

  if (cfg.use_embedding && d_const >= cfg.embedding_dim && !tape.basin_indices.empty()) {
    const Eigen::Index k = cfg.embedding_dim;
    for (Eigen::Index j = 0; j < b; ++j) {
      const int basin = tape.basin_indices[static_cast<std::size_t>(j)];
      g.embed.row(basin) += out.d_constant.block(d_const - k, j, k, 1).transpose();
    }
  }

  if (want_step_grads) {
    out.d_steps.reserve(static_cast<std::size_t>(t_len));
    for (Eigen::Index t = 0; t < t_len; ++t) {
      out.d_steps.emplace_back(params.w_ih.leftCols(d_step).transpose() * d_pre.middleCols(t * b, b));
    }
  }
  return out;
}

/// Per-timestep input gradient of a single sequence built by
/// sequence_from_rows, as a T x D matrix.
inline Eigen::MatrixXd input_gradient_rows(const BackwardResult& r) {
  if (r.d_steps.empty()) return {};
  Eigen::MatrixXd out(static_cast<Eigen::Index>(r.d_steps.size()), r.d_steps.front().rows());
  for (std::size_t t = 0; t < r.d_steps.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = r.d_steps[t].col(0).transpose();
  return out;
}

}  // namespace hydro_embed
