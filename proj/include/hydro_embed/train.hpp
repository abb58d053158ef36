#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hydro_embed/checkpoint.hpp"
#include "hydro_embed/config.hpp"
#include "hydro_embed/error.hpp"
#include "hydro_embed/ingest.hpp"
#include "hydro_embed/net.hpp"
#include "hydro_embed/optim.hpp"
#include "hydro_embed/parallel.hpp"
#include "hydro_embed/pipeline.hpp"
#include "hydro_embed/rng.hpp"

namespace hydro_embed {

/// Samples per forward/backward work unit. Fixed so that the gradient
/// reduction tree, and therefore every bit of the result, does not depend on
/// the worker count.
inline constexpr std::size_t kChunkSize = 32;

namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kDropout = 3;
}  // namespace stream

inline void accumulate(Gradients& into, const Gradients& other) {
  for_each_field([](auto&& a, const auto& b) { a += b; }, into, other);
}

/// Pairwise sum in index order: ((g0+g1)+(g2+g3))+...
inline Gradients tree_reduce(std::vector<Gradients> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "nothing to reduce");
  while (parts.size() > 1) {
    std::vector<Gradients> next;
    next.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      accumulate(parts[i], parts[i + 1]);
      next.push_back(std::move(parts[i]));
    }
    if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

inline ModelConfig model_config_for(const TrainConfig& cfg, int num_basins, int num_attributes) {
  ModelConfig m;
  m.dynamic_dim = kNumForcingFeatures;
  m.use_static = uses_static(cfg.mode);
  m.use_embedding = uses_embedding(cfg.mode);
  m.static_dim = m.use_static ? num_attributes : 0;
  m.embedding_dim = m.use_embedding ? cfg.embedding_dim : 0;
  m.hidden_size = cfg.hidden_size;
  m.num_basins = num_basins;
  m.dropout_rate = cfg.dropout;
  return m;
}

/// Population std of each basin's targets; 0 for basins without samples.
inline Eigen::VectorXd basin_target_std(std::span<const Sample> samples, int num_basins) {
  std::vector<std::vector<double>> per(static_cast<std::size_t>(num_basins));
  for (const auto& s : samples) per[static_cast<std::size_t>(s.basin_index)].push_back(s.target);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_basins);
  for (int b = 0; b < num_basins; ++b) {
    const auto& v = per[static_cast<std::size_t>(b)];
    if (v.empty()) continue;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out(b) = std::sqrt(ss / static_cast<double>(v.size()));
  }
  return out;
}

/// Eval-mode predictions (standardized space) for a list of samples.
inline Eigen::VectorXd predict(std::span<const Sample> samples, const ModelParams& params, const ModelConfig& cfg,
                               int threads = 0) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(samples.size()));
  const std::size_t chunks = (samples.size() + kChunkSize - 1) / kChunkSize;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunkSize;
    const std::size_t hi = std::min(samples.size(), lo + kChunkSize);
    std::vector<const Sample*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&samples[i]);
    const auto res = forward(assemble_input(ptrs, params, cfg), params, cfg);
    out.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) = res.predictions;
  });
  return out;
}

struct BatchStep {
  double loss = 0.0;
  Gradients grads;
};

/// Forward, loss and backward over one batch, chunked and reduced
/// deterministically. `mask` is H x B or null for no dropout.
inline BatchStep batch_loss_and_gradients(std::span<const Sample* const> batch, const ModelParams& params,
                                          const ModelConfig& cfg, const LossConfig& loss_cfg,
                                          const Eigen::MatrixXd* mask, int threads = 0) {
  const std::size_t n = batch.size();
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<ForwardResult> fwd(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunkSize;
    const std::size_t hi = std::min(n, lo + kChunkSize);
    const auto input = assemble_input(batch.subspan(lo, hi - lo), params, cfg);
    if (mask) {
      const Eigen::MatrixXd m = mask->middleCols(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo));
      fwd[c] = forward(input, params, cfg, &m);
    } else {
      fwd[c] = forward(input, params, cfg);
    }
  });

  std::vector<double> preds(n), targets(n);
  std::vector<int> basins(n);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t lo = c * kChunkSize;
    for (Eigen::Index j = 0; j < fwd[c].predictions.size(); ++j) preds[lo + static_cast<std::size_t>(j)] = fwd[c].predictions(j);
  }
  for (std::size_t j = 0; j < n; ++j) {
    targets[j] = batch[j]->target;
    basins[j] = batch[j]->basin_index;
  }
  const LossResult loss = nse_star_loss(preds, targets, basins, loss_cfg);

  std::vector<Gradients> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunkSize;
    const auto len = fwd[c].predictions.size();
    const Eigen::VectorXd up = loss.d_predictions.segment(static_cast<Eigen::Index>(lo), len);
    parts[c] = backward(fwd[c].tape, up, params, cfg).grads;
  });
  return {loss.loss, tree_reduce(std::move(parts))};
}

struct TrainOptions {
  int threads = 0;
  std::optional<Checkpoint> resume;
  /// Called after every completed epoch with the current state.
  std::function<void(const Checkpoint&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_log;
};

namespace detail {

inline std::vector<const BasinRecord*> sorted_records(std::span<const BasinRecord> records) {
  std::vector<const BasinRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->basin_id < b->basin_id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i]->basin_id == out[i - 1]->basin_id) throw Error(ErrorCode::DuplicateBasinId, out[i]->basin_id);
  }
  return out;
}

inline std::string describe_batch(int epoch, std::size_t batch, std::span<const Sample* const> samples,
                                  const std::vector<std::string>& ids) {
  std::vector<int> seen;
  for (const auto* s : samples) seen.push_back(s->basin_index);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  std::ostringstream out;
  out << "epoch " << epoch + 1 << ", batch " << batch << ", basins [";
  for (std::size_t i = 0; i < seen.size(); ++i) out << (i ? "," : "") << ids[static_cast<std::size_t>(seen[i])];
  out << "]";
  return out.str();
}

}  // namespace detail

/// Trains one model over all basins. A pure function of (records, cfg) for
/// any thread count; resuming from an epoch-k checkpoint of the same run
/// reproduces the uninterrupted run bit for bit.
inline TrainResult train_run(std::span<const BasinRecord> records, const TrainConfig& cfg, const TrainOptions& options = {}) {
  cfg.validate();
  if (records.empty()) throw Error(ErrorCode::NoValidBasins, "training needs at least one basin");
  const auto basins = detail::sorted_records(records);
  std::vector<BasinRecord> ordered;
  ordered.reserve(basins.size());
  for (const auto* r : basins) ordered.push_back(*r);

  Checkpoint ck;
  ck.mode = cfg.mode;
  ck.lookback = cfg.lookback;
  ck.split = cfg.split;
  ck.seed = cfg.seed;
  ck.epsilon = cfg.epsilon;
  for (const auto& r : ordered) ck.basin_ids.push_back(r.basin_id);
  const int num_attributes = static_cast<int>(ordered.front().attributes.values.size());
  ck.model = model_config_for(cfg, static_cast<int>(ordered.size()), num_attributes);

  ck.standardizers.dynamic = fit_standardizer(ordered, cfg.split, FeatureGroup::Dynamic);
  if (ck.model.use_static) ck.standardizers.static_attrs = fit_standardizer(ordered, cfg.split, FeatureGroup::Static);
  ck.standardizers.target = fit_standardizer(ordered, cfg.split, FeatureGroup::Target);

  if (options.resume) {
    const Checkpoint& from = *options.resume;
    if (!(from.model == ck.model) || from.mode != ck.mode || from.lookback != ck.lookback ||
        from.basin_ids != ck.basin_ids || !(from.split == ck.split) || from.seed != ck.seed) {
      throw Error(ErrorCode::IncompatibleCheckpoint, "resume checkpoint does not match this configuration and data");
    }
    ck.standardizers = from.standardizers;
  }

  std::vector<Sample> samples;
  for (std::size_t b = 0; b < ordered.size(); ++b) {
    auto s = make_samples(ordered[b], static_cast<int>(b), cfg.split, Phase::Train, ck.standardizers, cfg.lookback);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (samples.empty()) throw Error(ErrorCode::EmptySampleSet, "no training samples in the training period");

  ck.basin_flow_std = basin_target_std(samples, ck.model.num_basins);
  const LossConfig loss_cfg{cfg.epsilon, ck.basin_flow_std};

  if (options.resume) {
    ck.params = options.resume->params;
    ck.opt = options.resume->opt;
    ck.epoch = options.resume->epoch;
    ck.loss_log = options.resume->loss_log;
  } else {
    ck.params = init_params(ck.model, derive_seed(cfg.seed, stream::kInit));
    ck.opt = OptState::fresh(ck.params);
  }
  ck.opt.lr = cfg.lr;
  ck.opt.beta1 = cfg.beta1;
  ck.opt.beta2 = cfg.beta2;
  ck.opt.adam_eps = cfg.adam_eps;
  ck.opt.clip_norm = cfg.clip_norm;

  const Eigen::Index h = ck.model.hidden_size;
  for (int epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    const auto batches = batch_indices(samples.size(), cfg.batch_size, derive_seed(cfg.seed, stream::kShuffle, static_cast<std::uint64_t>(epoch)));
    Rng dropout_rng(derive_seed(cfg.seed, stream::kDropout, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<const Sample*> batch;
      batch.reserve(batches[bi].size());
      for (auto i : batches[bi]) batch.push_back(&samples[i]);

      std::optional<Eigen::MatrixXd> mask;
      if (cfg.dropout > 0.0) {
        mask.emplace(h, static_cast<Eigen::Index>(batch.size()));
        for (Eigen::Index j = 0; j < mask->cols(); ++j)
          for (Eigen::Index r = 0; r < h; ++r) (*mask)(r, j) = dropout_rng.bernoulli(1.0 - cfg.dropout) ? 1.0 : 0.0;
      }

      BatchStep step;
      try {
        step = batch_loss_and_gradients(batch, ck.params, ck.model, loss_cfg, mask ? &*mask : nullptr, options.threads);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteActivation) throw;
        throw Error(ErrorCode::NonFiniteActivation,
                    std::string("training diverged at ") + detail::describe_batch(epoch, bi, batch, ck.basin_ids));
      }
      const Gradients clipped = clip_gradients(std::move(step.grads), cfg.clip_norm);
      adam_step(ck.params, clipped, ck.opt);
      loss_sum += step.loss;
    }
    ck.epoch = epoch + 1;
    ck.loss_log.push_back(loss_sum / static_cast<double>(batches.size()));
    if (options.on_epoch) options.on_epoch(ck);
  }
  return {ck, ck.loss_log};
}

}  // namespace hydro_embed
