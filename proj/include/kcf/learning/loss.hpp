#pragma once

#include "kcf/dictionary.hpp"
#include "kcf/learning/mlp.hpp"
#include "kcf/learning/neural.hpp"
#include "kcf/linalg.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kcf::learning {

enum class ModelClass { separable, bilinear, linear };

inline const char* to_string(ModelClass c) {
  switch (c) {
    case ModelClass::separable: return "separable";
    case ModelClass::bilinear: return "bilinear";
    case ModelClass::linear: return "linear";
  }
  return "?";
}

inline ModelClass model_class_from_string(const std::string& s) {
  if (s == "separable") return ModelClass::separable;
  if (s == "bilinear") return ModelClass::bilinear;
  if (s == "linear") return ModelClass::linear;
  throw ValidationError("unknown model class '" + s + "' (expected separable, bilinear or linear)");
}

/**
 * @brief Trainable normal basis: a network H^phi plus either a network G^theta
 * (separable) or a fixed structured G (bilinear, lifted linear).
 *
 * For the linear class the state network has n_H - 1 outputs and the
 * constant function is appended, so n_H counts the constant.
 */
struct ParametricBasis {
  ModelClass model_class = ModelClass::separable;
  Index n_h = 0;
  Index n_psi = 0;
  Mlp h_net;
  std::vector<Index> pinned;
  std::optional<Mlp> g_net;

  Index m = 0;

  Index state_dim() const { return h_net.spec().input_dim; }
  Index input_dim() const { return m; }
  Index n_g() const { return n_psi - n_h; }

  Index parameter_count() const { return h_net.parameter_count() + (g_net ? g_net->parameter_count() : 0); }

  Vector parameters() const {
    Vector p(parameter_count());
    p.head(h_net.parameter_count()) = h_net.parameters();
    if (g_net) p.tail(g_net->parameter_count()) = g_net->parameters();
    return p;
  }

  void set_parameters(const Vector& p) {
    if (p.size() != parameter_count()) throw DimensionError("parameter vector length mismatch");
    h_net.parameters() = p.head(h_net.parameter_count());
    if (g_net) g_net->parameters() = p.tail(g_net->parameter_count());
  }

  /// Immutable normal basis for the current parameters.
  NormalBasis snapshot() const {
    StateDictionary h(std::make_shared<NeuralStateDictionary>(h_net, pinned));
    if (model_class == ModelClass::linear) return make_lifted_linear(h, m);
    if (model_class == ModelClass::bilinear) return make_bilinear(h, m);
    return NormalBasis(h, InputFactor(std::make_shared<NeuralInputFactor>(*g_net, n_g(), n_h)));
  }
};

struct ParametricBasisShape {
  ModelClass model_class = ModelClass::separable;
  Index n = 0;
  Index m = 0;
  Index n_h = 5;
  Index n_psi = 10;  ///< only used by the separable class; structured classes derive it
  std::vector<Index> hidden{32, 32};
  bool layer_norm = true;
  Index pinned = 0;  ///< leading outputs of H fixed to the state coordinates
  Vector x_shift, x_scale, u_shift, u_scale;
};

inline ParametricBasis make_parametric_basis(const ParametricBasisShape& s, Rng& rng) {
  if (s.n <= 0 || s.m <= 0) throw ValidationError("state and input dimensions must be positive");
  ParametricBasis b;
  b.model_class = s.model_class;
  b.n_h = s.n_h;
  b.m = s.m;
  const Index net_outputs = s.model_class == ModelClass::linear ? s.n_h - 1 : s.n_h;
  if (net_outputs < 1) throw ValidationError("n_H too small for the model class");
  if (s.pinned > net_outputs || s.pinned > s.n) throw ValidationError("more pinned outputs than available");
  switch (s.model_class) {
    case ModelClass::linear: b.n_psi = s.n_h + s.m; break;
    case ModelClass::bilinear: b.n_psi = (s.m + 1) * s.n_h; break;
    case ModelClass::separable:
      if (s.n_psi <= s.n_h) throw ValidationError("separable basis needs n_Psi > n_H");
      b.n_psi = s.n_psi;
      break;
  }
  MlpSpec hs{s.n, s.hidden, net_outputs, s.layer_norm, s.x_shift, s.x_scale};
  b.h_net = Mlp::initialize(hs, rng);
  for (Index i = 0; i < s.pinned; ++i) b.pinned.push_back(i);
  if (s.model_class == ModelClass::separable) {
    MlpSpec gs{s.m, s.hidden, (b.n_psi - b.n_h) * b.n_h, s.layer_norm, s.u_shift, s.u_scale};
    b.g_net = Mlp::initialize(gs, rng);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Loss on evaluated dictionary matrices

struct LossWeights {
  double alpha = 1e-5;   ///< weight of the cond(Psi(X,U)) surrogate
  double alpha_h = 0.0;  ///< weight of the cond(H(X+)) surrogate
};

struct MatrixLoss {
  double value = 0.0;
  double trace = 0.0;     ///< tr(M_CC)
  double cond_psi = 0.0;  ///< surrogate for Psi(X,U)
  double cond_h = 0.0;    ///< surrogate for H(X+)
  double gram_cond_l = 0.0;
  double gram_cond_j = 0.0;
  Matrix grad_j;  ///< d value / d J, empty unless requested
  Matrix grad_l;  ///< d value / d L
};

/// sqrt(tr(M M^T) tr((M M^T)^{-1})) / rows; 1 exactly when the rows are orthogonal with equal norms.
inline double condition_surrogate(const GramFactor& g) {
  const Matrix inv = g.inverse();
  return std::sqrt(g.gram().trace() * inv.trace()) / static_cast<double>(g.rows());
}

namespace detail {
/// d/dM of condition_surrogate
inline Matrix condition_surrogate_gradient(const GramFactor& g, const Matrix& m) {
  const Matrix inv = g.inverse();
  const double a = g.gram().trace(), b = inv.trace();
  const double root = std::sqrt(a * b);
  return (b * m - a * (inv * inv) * m) / (static_cast<double>(g.rows()) * root);
}
}  // namespace detail

/**
 * @brief tr(I - J L^+ L J^+) + alpha cond~(L) + alpha_h cond~(J), with gradients.
 *
 * With W = (J J^T)^{-1}, V = (L L^T)^{-1}, A_f = J L^T V and S = A_f L J^T,
 * the trace is n_H - tr(W S) and
 *   d tr(W S) / dJ = 2 W (A_f L - S W J),
 *   d tr(W S) / dL = 2 V L J^T W (J - A_f L).
 * Throws RankError (from GramFactor) when either matrix fails the rank guard.
 */
inline MatrixLoss consistency_loss(const Matrix& j, const Matrix& l, const LossWeights& weights, bool gradient) {
  if (j.cols() != l.cols()) throw DimensionError("J and L column counts differ");
  GramFactor gl(l, "Psi(X,U)");
  GramFactor gj(j, "H(X+)");
  const Index nh = j.rows();
  const Matrix jlt = j * l.transpose();
  const Matrix a_f = gl.solve_right(jlt);
  const Matrix s = a_f * jlt.transpose();
  const Matrix ws = gj.solve(s);

  MatrixLoss out;
  out.trace = static_cast<double>(nh) - ws.trace();
  out.cond_psi = condition_surrogate(gl);
  out.cond_h = weights.alpha_h != 0.0 ? condition_surrogate(gj) : 0.0;
  out.value = out.trace + weights.alpha * out.cond_psi + weights.alpha_h * out.cond_h;
  out.gram_cond_l = gl.condition();
  out.gram_cond_j = gj.condition();
  if (!gradient) return out;

  const Matrix pred = a_f * l;  // J P
  const Matrix wj = gj.solve(j);
  out.grad_j = -2.0 * gj.solve(pred - s * wj);
  const Matrix b = gl.solve(jlt.transpose() * gj.inverse());  // V L J^T W
  out.grad_l = -2.0 * b * (j - pred);
  if (weights.alpha != 0.0) out.grad_l += weights.alpha * detail::condition_surrogate_gradient(gl, l);
  if (weights.alpha_h != 0.0) out.grad_j += weights.alpha_h * detail::condition_surrogate_gradient(gj, j);
  return out;
}

// ---------------------------------------------------------------------------
// Loss through the networks

struct LossEvaluation {
  MatrixLoss terms;
  Vector gradient;  ///< [d/dphi; d/dtheta], empty unless requested
};

/**
 * @brief Loss of a parametric basis on a batch, with the reverse-mode
 * gradient through the closed-form regression and both networks.
 */
inline LossEvaluation evaluate_loss(const ParametricBasis& basis, const Matrix& x, const Matrix& x_plus,
                                    const Matrix& u, const LossWeights& weights, bool gradient) {
  const Index nb = x.cols();
  if (x_plus.cols() != nb || u.cols() != nb) throw DimensionError("batch matrices have different column counts");
  const Index nh = basis.n_h, ng = basis.n_g();
  const bool linear = basis.model_class == ModelClass::linear;
  const Index net_out = basis.h_net.spec().output_dim;

  auto lift_h = [&](const Matrix& states, Mlp::Cache& cache) {
    Matrix raw = basis.h_net.forward(states, cache);
    for (Index p : basis.pinned) raw.row(p) = states.row(p);
    if (!linear) return raw;
    Matrix h(nh, nb);
    h.topRows(net_out) = raw;
    h.row(nh - 1).setOnes();
    return h;
  };

  Mlp::Cache cache_x, cache_xp, cache_u;
  const Matrix hx = lift_h(x, cache_x);
  const Matrix j = lift_h(x_plus, cache_xp);

  Matrix g_flat;
  Matrix l(basis.n_psi, nb);
  l.topRows(nh) = hx;
  switch (basis.model_class) {
    case ModelClass::separable:
      g_flat = basis.g_net->forward(u, cache_u);
      l.bottomRows(ng) = NeuralInputFactor::apply_flat(g_flat, hx, ng, nh);
      break;
    case ModelClass::bilinear:
      for (Index k = 0; k < u.rows(); ++k) l.middleRows(nh + k * nh, nh) = hx.array().rowwise() * u.row(k).array();
      break;
    case ModelClass::linear: l.bottomRows(ng) = u.array().rowwise() * hx.row(nh - 1).array(); break;
  }

  LossEvaluation ev;
  ev.terms = consistency_loss(j, l, weights, gradient);
  if (!gradient) return ev;

  const Matrix& dl = ev.terms.grad_l;
  Matrix dhx = dl.topRows(nh);
  Matrix dg_flat;
  switch (basis.model_class) {
    case ModelClass::separable:
      dg_flat.resize(ng * nh, nb);
      for (Index i = 0; i < nb; ++i) {
        Eigen::Map<const RowMajorMatrix> g(g_flat.col(i).data(), ng, nh);
        dhx.col(i) += g.transpose() * dl.col(i).tail(ng);
        Eigen::Map<RowMajorMatrix>(dg_flat.col(i).data(), ng, nh) = dl.col(i).tail(ng) * hx.col(i).transpose();
      }
      break;
    case ModelClass::bilinear:
      for (Index k = 0; k < u.rows(); ++k)
        dhx += (dl.middleRows(nh + k * nh, nh).array().rowwise() * u.row(k).array()).matrix();
      break;
    case ModelClass::linear: break;  // only the constant slot feeds G H
  }

  Matrix dnet_x = dhx.topRows(net_out);
  Matrix dnet_xp = ev.terms.grad_j.topRows(net_out);
  for (Index p : basis.pinned) {
    dnet_x.row(p).setZero();
    dnet_xp.row(p).setZero();
  }
  ev.gradient.resize(basis.parameter_count());
  const Index nphi = basis.h_net.parameter_count();
  ev.gradient.head(nphi) = basis.h_net.backward(cache_x, dnet_x) + basis.h_net.backward(cache_xp, dnet_xp);
  if (basis.g_net) ev.gradient.tail(basis.g_net->parameter_count()) = basis.g_net->backward(cache_u, dg_flat);
  return ev;
}

}  // namespace kcf::learning
