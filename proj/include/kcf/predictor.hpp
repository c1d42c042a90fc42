#pragma once

#include "kcf/core.hpp"
#include "kcf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace kcf {

/// Relative errors divide by max(|H(x_t)|, floor) per coordinate.
inline constexpr double kRelativeErrorFloor = 1e-8;

/// z+ = (A11 + A12 G(u)) z
inline Vector step_general(const FittedModel& model, const Vector& z, const Vector& u) {
  return model.a11 * z + model.a12 * model.basis.input_factor()(u) * z;
}

/// z+ = A11 z + A12 u (lifted-linear basis; the constant slot of z is taken to be 1).
inline Vector step_lifted_linear(const FittedModel& model, const Vector& z, const Vector& u) {
  return model.a11 * z + model.a12 * u;
}

/// z+ = A11 z + sum_i u_i B_i z with A12 = [B_1, ..., B_m].
inline Vector step_bilinear(const FittedModel& model, const Vector& z, const Vector& u) {
  const Index nh = model.n_h();
  Vector out = model.a11 * z;
  for (Index i = 0; i < u.size(); ++i) out += u(i) * (model.a12.middleCols(i * nh, nh) * z);
  return out;
}

/// One predictor step, dispatched on the basis structure.
inline Vector step(const FittedModel& model, const Vector& z, const Vector& u) {
  if (z.size() != model.n_h())
    throw DimensionError("lifted state has length " + std::to_string(z.size()) + ", model expects n_H = " +
                         std::to_string(model.n_h()));
  if (u.size() != model.basis.input_dim()) throw DimensionError("input length differs from m");
  switch (model.basis.structure()) {
    case InputStructure::lifted_linear: return step_lifted_linear(model, z, u);
    case InputStructure::bilinear: return step_bilinear(model, z, u);
    case InputStructure::general: break;
  }
  return step_general(model, z, u);
}

/// v^T (A11 + A12 G(u)) H(x)
inline double function_predict(const Vector& v, const FittedModel& model, const Vector& x, const Vector& u) {
  if (v.size() != model.n_h()) throw DimensionError("function coefficients must have length n_H");
  return v.dot(model.transition(u) * model.basis.state_dictionary()(x));
}

struct RolloutResult {
  Matrix predicted;        ///< n_H x (T+1), column 0 = H(x_0)
  Matrix truth;            ///< n_H x (T+1) lifted true states; empty without truth
  Matrix relative_error;   ///< n_H x (T+1); empty without truth
};

/**
 * @brief Iterate the point-wise predictor from z_0 = H(x_0).
 *
 * `inputs` is m x T. When `true_states` (n x (T+1)) is given, the lifted
 * truth and per-coordinate relative errors are filled in.
 */
inline RolloutResult rollout(const FittedModel& model, const Vector& x0, const Matrix& inputs,
                             const std::optional<Matrix>& true_states = std::nullopt) {
  model.validate();
  const Index horizon = inputs.cols();
  if (inputs.rows() != model.basis.input_dim() && horizon > 0) throw DimensionError("input sequence must be m x T");
  RolloutResult res;
  res.predicted.resize(model.n_h(), horizon + 1);
  res.predicted.col(0) = model.basis.state_dictionary()(x0);
  for (Index t = 0; t < horizon; ++t) {
    res.predicted.col(t + 1) = step(model, res.predicted.col(t), inputs.col(t));
    if (!res.predicted.col(t + 1).allFinite())
      throw NumericalError("non-finite", "rollout produced non-finite values at step " + std::to_string(t + 1));
  }
  if (true_states) {
    if (true_states->cols() != horizon + 1 || true_states->rows() != model.basis.state_dim())
      throw DimensionError("true trajectory must be n x (T+1)");
    res.truth = model.basis.state_dictionary()(*true_states);
    const Matrix scale = res.truth.cwiseAbs().cwiseMax(kRelativeErrorFloor);
    res.relative_error = (res.predicted - res.truth).cwiseAbs().cwiseQuotient(scale);
  }
  return res;
}

/// Linear-interpolation percentile of an unsorted sample, q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct ErrorStatistics {
  std::vector<Index> coordinates;
  Matrix median;  ///< coordinates x (T+1)
  Matrix q25;
  Matrix q75;
};

/// Per-step median and quartiles of relative error for the chosen lifted coordinates.
inline ErrorStatistics error_statistics(const std::vector<RolloutResult>& results,
                                        const std::vector<Index>& coordinates) {
  if (results.empty()) throw ValidationError("error statistics need at least one rollout");
  const Index steps = results.front().relative_error.cols();
  for (const auto& r : results) {
    if (r.relative_error.size() == 0) throw ValidationError("rollout has no truth-based errors");
    if (r.relative_error.cols() != steps) throw DimensionError("rollouts have different horizons");
  }
  ErrorStatistics s;
  s.coordinates = coordinates;
  const auto nc = static_cast<Index>(coordinates.size());
  s.median.resize(nc, steps);
  s.q25.resize(nc, steps);
  s.q75.resize(nc, steps);
  std::vector<double> sample(results.size());
  for (Index c = 0; c < nc; ++c) {
    const Index row = coordinates[static_cast<std::size_t>(c)];
    if (row < 0 || row >= results.front().relative_error.rows()) throw DimensionError("coordinate out of range");
    for (Index t = 0; t < steps; ++t) {
      for (std::size_t k = 0; k < results.size(); ++k) sample[k] = results[k].relative_error(row, t);
      s.median(c, t) = percentile(sample, 0.5);
      s.q25(c, t) = percentile(sample, 0.25);
      s.q75(c, t) = percentile(sample, 0.75);
    }
  }
  return s;
}

}  // namespace kcf
