#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "hydro_embed/error.hpp"
#include "hydro_embed/net.hpp"

namespace hydro_embed {

/// Robustness constant and per-basin spread of the standardized training
/// discharge used to normalize squared errors.
struct LossConfig {
  double epsilon = 0.1;
  Eigen::VectorXd basin_flow_std;
};

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd d_predictions;
};

/// Batch-averaged squared error, each term scaled by 1 / (s_b + eps)^2 of
/// its basin.
inline LossResult nse_star_loss(std::span<const double> predictions, std::span<const double> targets,
                                std::span<const int> basin_indices, const LossConfig& cfg) {
  if (predictions.size() != targets.size() || predictions.size() != basin_indices.size() || predictions.empty()) {
    throw Error(ErrorCode::LengthMismatch, "predictions, targets and basin indices must be equal and non-empty");
  }
  const auto n = static_cast<double>(predictions.size());
  LossResult out;
  out.d_predictions.resize(static_cast<Eigen::Index>(predictions.size()));
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    const int b = basin_indices[j];
    if (b < 0 || b >= cfg.basin_flow_std.size()) {
      throw Error(ErrorCode::MissingBasinStd, "no flow std for basin index " + std::to_string(b));
    }
    const double scale = cfg.basin_flow_std(b) + cfg.epsilon;
    const double denom = scale * scale;
    if (!(denom > 0.0)) throw Error(ErrorCode::MissingBasinStd, "zero normalizer for basin index " + std::to_string(b));
    const double err = predictions[j] - targets[j];
    out.loss += err * err / denom;
    out.d_predictions(static_cast<Eigen::Index>(j)) = 2.0 * err / (n * denom);
  }
  out.loss /= n;
  return out;
}

inline double global_norm(const Gradients& g) {
  double ss = 0.0;
  for_each_field([&](const auto& x) { ss += x.squaredNorm(); }, g);
  return std::sqrt(ss);
}

/// Rescales all gradients together when their global L2 norm exceeds
/// clip_norm; otherwise leaves them untouched.
inline Gradients clip_gradients(Gradients grads, double clip_norm) {
  if (!(clip_norm > 0.0)) return grads;
  const double norm = global_norm(grads);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for_each_field([&](auto&& x) { x *= scale; }, grads);
  }
  return grads;
}

struct OptState {
  std::int64_t step_count = 0;
  ModelParams m;
  ModelParams v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;

  static OptState fresh(const ModelParams& like) {
    OptState s;
    s.m = like;
    s.v = like;
    for_each_field([](auto&& x) { x.setZero(); }, s.m);
    for_each_field([](auto&& x) { x.setZero(); }, s.v);
    return s;
  }

  friend bool operator==(const OptState&, const OptState&) = default;
};

/// Bias-corrected Adam over every parameter, embedding rows included even
/// when their gradient is zero.
inline void adam_step(ModelParams& params, const Gradients& grads, OptState& opt) {
  ++opt.step_count;
  const double t = static_cast<double>(opt.step_count);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for_each_field(
      [&](auto&& p, const auto& g, auto&& m, auto&& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseAbs2();
        p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.adam_eps);
      },
      params, grads, opt.m, opt.v);
}

}  // namespace hydro_embed
