#pragma once

#include "kcf/consistency.hpp"
#include "kcf/learning/loss.hpp"
#include "kcf/learning/optimizer.hpp"
#include "kcf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace kcf::learning {

/// Training hyper-parameters. Defaults are the desk-scale configuration.
struct TrainConfig {
  int epochs = 100;
  int warmup_epochs = 10;
  Index batch_size = 100;
  double lr_peak = 1e-3;
  double lr_floor = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double alpha = 1e-5;
  double alpha_h = 0.0;
  std::uint64_t seed = 0;
  std::vector<Index> hidden{32, 32};
  Index n_h = 5;
  Index n_psi = 10;
  bool layer_norm = true;
  Index pinned = -1;  ///< leading H outputs fixed to the state; -1 pins all n coordinates
  int checkpoint_every = 0;

  /// Four hidden layers of 64, 500 epochs, 50 warmup epochs.
  static TrainConfig paper_scale() {
    TrainConfig c;
    c.epochs = 500;
    c.warmup_epochs = 50;
    c.hidden = {64, 64, 64, 64};
    return c;
  }

  ScheduleConfig schedule() const { return {epochs, warmup_epochs, lr_peak, lr_floor}; }

  /// n_Psi actually used by a model class with m inputs.
  Index effective_n_psi(ModelClass cls, Index m) const {
    switch (cls) {
      case ModelClass::linear: return n_h + m;
      case ModelClass::bilinear: return (m + 1) * n_h;
      case ModelClass::separable: return n_psi;
    }
    return n_psi;
  }

  void validate(ModelClass cls, Index m) const {
    if (epochs < 1) throw ValidationError("epochs must be at least 1");
    if (warmup_epochs < 0 || warmup_epochs > epochs) throw ValidationError("warmup epochs must lie in [0, epochs]");
    if (!(lr_floor > 0.0) || !(lr_floor <= lr_peak)) throw ValidationError("need 0 < lr_floor <= lr_peak");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas in [0, 1)");
    if (alpha < 0.0 || alpha_h < 0.0) throw ValidationError("loss weights must be non-negative");
    const Index np = effective_n_psi(cls, m);
    if (batch_size <= np)
      throw ValidationError("batch size " + std::to_string(batch_size) + " must exceed n_Psi = " + std::to_string(np));
  }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;   ///< mean over accepted batches
  double trace = 0.0;  ///< mean tr(M_CC) over accepted batches
  int batches = 0;
  int skipped = 0;     ///< batches rejected by the rank guard
};

struct TrainCallbacks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(int epoch, const ParametricBasis&)> on_checkpoint;
};

struct TrainResult {
  ParametricBasis parameters;
  NormalBasis basis;
  FittedModel model;
  ConsistencyReport train_report;
  std::optional<ConsistencyReport> test_report;
  std::vector<EpochLog> history;
};

namespace detail {
inline void standardization(const Matrix& data, Vector& shift, Vector& scale) {
  shift = data.rowwise().mean();
  scale = ((data.colwise() - shift).array().square().rowwise().mean()).sqrt();
  for (Index i = 0; i < scale.size(); ++i)
    if (!(scale(i) > 1e-12)) scale(i) = 1.0;
}
}  // namespace detail

/// Fresh parametric basis for `cls`, with input standardization fitted on `train`.
inline ParametricBasis initial_basis(const SnapshotDataset& train, ModelClass cls, const TrainConfig& cfg, Rng& rng) {
  ParametricBasisShape shape;
  shape.model_class = cls;
  shape.n = train.state_dim();
  shape.m = train.input_dim();
  shape.n_h = cfg.n_h;
  shape.n_psi = cfg.n_psi;
  shape.hidden = cfg.hidden;
  shape.layer_norm = cfg.layer_norm;
  shape.pinned = cfg.pinned < 0 ? std::min(shape.n, cls == ModelClass::linear ? cfg.n_h - 1 : cfg.n_h) : cfg.pinned;
  detail::standardization(train.x, shape.x_shift, shape.x_scale);
  detail::standardization(train.u, shape.u_shift, shape.u_scale);
  return make_parametric_basis(shape, rng);
}

/**
 * @brief Learn a normal basis by minimizing the consistency loss with Adam.
 *
 * Each epoch shuffles the training split into batches of `batch_size`
 * (a trailing partial batch is dropped). Batches failing the rank guard
 * are skipped. Afterwards [A11, A12] is refit on the whole training split
 * and both splits are certified.
 */
inline TrainResult train(const SnapshotDataset& data, ModelClass cls, const TrainConfig& cfg,
                         const TrainCallbacks& callbacks = {}) {
  data.validate();
  cfg.validate(cls, data.input_dim());
  const SnapshotDataset train_set = data.train_split();
  const auto test_idx = data.indices(false);
  if (train_set.size() < cfg.batch_size) throw ValidationError("training split is smaller than one batch");

  Rng rng(cfg.seed);
  ParametricBasis basis = initial_basis(train_set, cls, cfg, rng);
  Vector params = basis.parameters();
  Adam adam(params.size(), cfg.beta1, cfg.beta2);
  const LossWeights weights{cfg.alpha, cfg.alpha_h};
  const ScheduleConfig sched = cfg.schedule();

  TrainResult result;
  std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index n_batches = train_set.size() / cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_schedule(epoch, sched);
    for (Index b = 0; b < n_batches; ++b) {
      const std::vector<Index> cols(order.begin() + b * cfg.batch_size, order.begin() + (b + 1) * cfg.batch_size);
      LossEvaluation ev;
      try {
        ev = evaluate_loss(basis, train_set.x(Eigen::all, cols), train_set.x_plus(Eigen::all, cols),
                           train_set.u(Eigen::all, cols), weights, true);
      } catch (const RankError&) {
        ++log.skipped;
        continue;
      }
      if (!std::isfinite(ev.terms.value) || !ev.gradient.allFinite()) {
        throw NumericalError("divergence", "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(b));
      }
      adam.step(params, ev.gradient, log.lr);
      basis.set_parameters(params);
      log.loss += ev.terms.value;
      log.trace += ev.terms.trace;
      ++log.batches;
    }
    if (log.batches > 0) {
      log.loss /= log.batches;
      log.trace /= log.batches;
    }
    result.history.push_back(log);
    if (callbacks.on_epoch) callbacks.on_epoch(log);
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && callbacks.on_checkpoint)
      callbacks.on_checkpoint(epoch + 1, basis);
  }

  result.parameters = basis;
  result.basis = basis.snapshot();
  result.model = fit_top_block(result.basis, train_set);
  result.train_report = certify(result.basis, train_set);
  if (!test_idx.empty()) result.test_report = certify(result.basis, data.subset(test_idx));
  return result;
}

}  // namespace kcf::learning
