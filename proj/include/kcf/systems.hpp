#pragma once

#include "kcf/core.hpp"
#include "kcf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace kcf {

using VectorField = std::function<Vector(const Vector& x, const Vector& u)>;

struct Box {
  Vector lo;
  Vector hi;

  Index dim() const { return lo.size(); }
  bool contains(const Vector& x) const { return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all(); }

  /// Same center, half-widths multiplied by `factor`.
  Box scaled(double factor) const {
    const Vector c = 0.5 * (lo + hi);
    const Vector h = 0.5 * factor * (hi - lo);
    return {c - h, c + h};
  }

  Vector sample(Rng& rng) const {
    Vector x(dim());
    for (Index i = 0; i < dim(); ++i) x(i) = std::uniform_real_distribution<double>(lo(i), hi(i))(rng);
    return x;
  }

  static Box symmetric(Index dim, double half_width) {
    return {Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
  }
};

/**
 * @brief x+ = T(x, u), either an exact discrete map or a continuous vector
 * field discretized by RK4 at the sampling time of the caller.
 */
struct ControlSystem {
  std::string tag;
  Index n = 0;
  Index m = 0;
  VectorField rhs;           ///< continuous-time field (empty for discrete systems)
  VectorField discrete_map;  ///< exact discrete map (empty for continuous systems)
  Box state_domain;
  Box input_domain;

  bool continuous() const { return static_cast<bool>(rhs); }
};

/// Classical RK4 step with u held constant over [0, dt].
inline Vector integrate_step(const VectorField& f, const Vector& x, const Vector& u, double dt) {
  if (!(dt > 0.0)) throw ValidationError("integration step must be positive");
  const Vector k1 = f(x, u);
  const Vector k2 = f(x + 0.5 * dt * k1, u);
  const Vector k3 = f(x + 0.5 * dt * k2, u);
  const Vector k4 = f(x + dt * k3, u);
  Vector out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw NumericalError("non-finite", "integrator produced non-finite state");
  return out;
}

inline Vector advance(const ControlSystem& sys, const Vector& x, const Vector& u, double dt) {
  if (sys.continuous()) return integrate_step(sys.rhs, x, u, dt);
  Vector out = sys.discrete_map(x, u);
  if (!out.allFinite()) throw NumericalError("non-finite", "discrete map produced non-finite state");
  return out;
}

// ---------------------------------------------------------------------------
// DC motor

enum class InputNonlinearity { tanh, tanh_cos };

inline const char* to_string(InputNonlinearity k) { return k == InputNonlinearity::tanh ? "tanh" : "tanh-cos"; }

inline InputNonlinearity input_nonlinearity_from_string(const std::string& s) {
  if (s == "tanh") return InputNonlinearity::tanh;
  if (s == "tanh-cos" || s == "tanh_cos") return InputNonlinearity::tanh_cos;
  throw ValidationError("unknown input nonlinearity '" + s + "' (expected tanh or tanh-cos)");
}

/// f(u) = 2 tanh(u) or 2 tanh(u cos u)
inline double motor_input_term(double u, InputNonlinearity kind) {
  return kind == InputNonlinearity::tanh ? 2.0 * std::tanh(u) : 2.0 * std::tanh(u * std::cos(u));
}

inline Vector dc_motor_rhs(const Vector& x, const Vector& u, InputNonlinearity kind) {
  if (x.size() != 2 || u.size() != 1) throw DimensionError("DC motor expects n = 2, m = 1");
  const double f = motor_input_term(u(0), kind);
  Vector dx(2);
  dx(0) = -39.3153 * x(0) - 0.805732 * x(1) * f + 191.083;
  dx(1) = -1.65986 * x(1) + 57.3696 * x(0) * f - 333.333;
  return dx;
}

inline ControlSystem dc_motor(InputNonlinearity kind) {
  ControlSystem s;
  s.tag = std::string("dc-motor/") + to_string(kind);
  s.n = 2;
  s.m = 1;
  s.rhs = [kind](const Vector& x, const Vector& u) { return dc_motor_rhs(x, u, kind); };
  s.state_domain = {Eigen::Vector2d(-5.0, -250.0), Eigen::Vector2d(15.0, 125.0)};
  s.input_domain = {Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)};
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic exact systems

/// x+ = A x + B u
inline ControlSystem synthetic_linear(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) throw DimensionError("synthetic linear system: A n x n, B n x m");
  ControlSystem s;
  s.tag = "synthetic-linear";
  s.n = a.rows();
  s.m = b.cols();
  s.discrete_map = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
  s.state_domain = Box::symmetric(s.n, 1.0);
  s.input_domain = Box::symmetric(s.m, 1.0);
  return s;
}

/// x+ = A x + sum_i u_i B_i x
inline ControlSystem synthetic_bilinear(const Matrix& a, const std::vector<Matrix>& b) {
  if (a.rows() != a.cols() || b.empty()) throw DimensionError("synthetic bilinear system: A n x n and m >= 1 B_i");
  for (const auto& bi : b)
    if (bi.rows() != a.rows() || bi.cols() != a.cols()) throw DimensionError("each B_i must be n x n");
  ControlSystem s;
  s.tag = "synthetic-bilinear";
  s.n = a.rows();
  s.m = static_cast<Index>(b.size());
  s.discrete_map = [a, b](const Vector& x, const Vector& u) -> Vector {
    Vector out = a * x;
    for (std::size_t i = 0; i < b.size(); ++i) out += u(static_cast<Index>(i)) * (b[i] * x);
    return out;
  };
  s.state_domain = Box::symmetric(s.n, 1.0);
  s.input_domain = Box::symmetric(s.m, 1.0);
  return s;
}

/// Reconstructible description of a reference system (recorded in dataset sidecars).
struct SystemDescription {
  std::string name = "dc-motor";  ///< dc-motor | scalar-linear | synthetic-linear | synthetic-bilinear
  InputNonlinearity nonlinearity = InputNonlinearity::tanh;
  Matrix a;
  Matrix b;                 ///< synthetic-linear input matrix
  std::vector<Matrix> b_i;  ///< synthetic-bilinear input-coupling matrices

  static SystemDescription named(std::string name) {
    SystemDescription d;
    d.name = std::move(name);
    return d;
  }

  ControlSystem build() const {
    if (name == "dc-motor") return dc_motor(nonlinearity);
    if (name == "scalar-linear") {
      ControlSystem s = synthetic_linear(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0));
      s.tag = "scalar-linear";
      return s;
    }
    if (name == "synthetic-linear") return synthetic_linear(a, b);
    if (name == "synthetic-bilinear") return synthetic_bilinear(a, b_i);
    throw ValidationError("unknown system '" + name + "'");
  }
};

// ---------------------------------------------------------------------------
// Data collection

enum class SplitPolicy { random, contiguous };

struct ExperimentProtocol {
  double duration = 50.0;    ///< seconds
  double dt = 0.005;         ///< sampling time, seconds
  double hold = 0.2;         ///< input hold time, seconds
  Vector initial_state;      ///< empty means the origin
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  SplitPolicy split = SplitPolicy::random;
  double guard_factor = 10.0;

  Index steps() const { return static_cast<Index>(std::llround(duration / dt)); }
  Index hold_steps() const { return static_cast<Index>(std::llround(hold / dt)); }

  void validate() const {
    if (!(dt > 0.0) || !(duration > 0.0) || !(hold > 0.0)) throw ValidationError("protocol times must be positive");
    if (steps() < 1) throw ValidationError("protocol yields no snapshots");
    if (std::abs(static_cast<double>(hold_steps()) * dt - hold) > 1e-9 * std::max(1.0, hold) || hold_steps() < 1)
      throw ValidationError("input hold time must be an integer multiple of dt");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
  }
};

/// Mark round(fraction * N) columns as training data.
inline std::vector<std::uint8_t> make_split(Index n, double train_fraction, SplitPolicy policy, Rng& rng) {
  const auto n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  if (policy == SplitPolicy::random) std::shuffle(order.begin(), order.end(), rng);
  for (Index k = 0; k < n_train; ++k) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  return mask;
}

/**
 * @brief One trajectory under piecewise-constant random inputs.
 *
 * Inputs are redrawn uniformly from the input box every hold period.
 * Deterministic for a fixed seed.
 */
inline SnapshotDataset collect(const ControlSystem& sys, const ExperimentProtocol& protocol) {
  protocol.validate();
  const Index n_steps = protocol.steps();
  const Index hold = protocol.hold_steps();
  Rng rng(protocol.seed);
  const Box guard = sys.state_domain.scaled(protocol.guard_factor);

  Vector x = protocol.initial_state.size() ? protocol.initial_state : Vector::Zero(sys.n);
  if (x.size() != sys.n) throw DimensionError("initial state dimension differs from n");

  SnapshotDataset data;
  data.x.resize(sys.n, n_steps);
  data.x_plus.resize(sys.n, n_steps);
  data.u.resize(sys.m, n_steps);
  Vector u(sys.m);
  for (Index k = 0; k < n_steps; ++k) {
    if (k % hold == 0) u = sys.input_domain.sample(rng);
    const Vector next = advance(sys, x, u, protocol.dt);
    if (!guard.contains(next))
      throw NumericalError("guard", "trajectory left the guard box at step " + std::to_string(k + 1));
    data.x.col(k) = x;
    data.u.col(k) = u;
    data.x_plus.col(k) = next;
    x = next;
  }
  data.train_mask = make_split(n_steps, protocol.train_fraction, protocol.split, rng);
  return data;
}

/// N independent snapshots with (x, u) drawn uniformly from the domain boxes.
inline SnapshotDataset sample_snapshots(const ControlSystem& sys, Index n, std::uint64_t seed, double dt = 0.0) {
  if (n < 1) throw ValidationError("need at least one snapshot");
  Rng rng(seed);
  SnapshotDataset data;
  data.x.resize(sys.n, n);
  data.x_plus.resize(sys.n, n);
  data.u.resize(sys.m, n);
  for (Index k = 0; k < n; ++k) {
    data.x.col(k) = sys.state_domain.sample(rng);
    data.u.col(k) = sys.input_domain.sample(rng);
    data.x_plus.col(k) = advance(sys, data.x.col(k), data.u.col(k), dt);
  }
  data.train_mask.assign(static_cast<std::size_t>(n), 1);
  return data;
}

/// Piecewise-constant inputs, m x steps, redrawn every `hold` steps.
inline Matrix piecewise_constant_inputs(const Box& input_domain, Index steps, Index hold, Rng& rng) {
  if (hold < 1) throw ValidationError("hold must be at least one step");
  Matrix u(input_domain.dim(), steps);
  Vector cur;
  for (Index k = 0; k < steps; ++k) {
    if (k % hold == 0) cur = input_domain.sample(rng);
    u.col(k) = cur;
  }
  return u;
}

/// States x_0..x_T under the given input sequence.
inline Matrix simulate(const ControlSystem& sys, const Vector& x0, const Matrix& inputs, double dt) {
  Matrix traj(sys.n, inputs.cols() + 1);
  traj.col(0) = x0;
  for (Index k = 0; k < inputs.cols(); ++k) traj.col(k + 1) = advance(sys, traj.col(k), inputs.col(k), dt);
  return traj;
}

}  // namespace kcf
