#pragma once

#include "kcf/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace kcf::learning {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLayerNormEpsilon = 1e-5;

/**
 * @brief Shape of a feed-forward network.
 *
 * Every hidden layer is affine -> layer normalization (per sample, across
 * features) -> ELU(alpha = 1). The output layer is affine. Inputs are
 * standardized with a fixed shift/scale before the first layer.
 */
struct MlpSpec {
  Index input_dim = 0;
  std::vector<Index> hidden;
  Index output_dim = 0;
  bool layer_norm = true;
  Vector input_shift;  ///< empty means zero
  Vector input_scale;  ///< empty means one

  Index layer_count() const { return static_cast<Index>(hidden.size()) + 1; }
  Index fan_in(Index layer) const { return layer == 0 ? input_dim : hidden[static_cast<std::size_t>(layer - 1)]; }
  Index fan_out(Index layer) const {
    return layer == layer_count() - 1 ? output_dim : hidden[static_cast<std::size_t>(layer)];
  }
  bool normalized(Index layer) const { return layer_norm && layer < layer_count() - 1; }

  Index layer_parameter_count(Index layer) const {
    const Index in = fan_in(layer), out = fan_out(layer);
    return out * in + out + (normalized(layer) ? 2 * out : 0);
  }

  Index parameter_count() const {
    Index total = 0;
    for (Index l = 0; l < layer_count(); ++l) total += layer_parameter_count(l);
    return total;
  }

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0) throw ValidationError("network input/output dimensions must be positive");
    for (Index h : hidden)
      if (h <= 0) throw ValidationError("hidden widths must be positive");
    if (input_shift.size() != 0 && input_shift.size() != input_dim) throw DimensionError("input shift length");
    if (input_scale.size() != 0 && input_scale.size() != input_dim) throw DimensionError("input scale length");
    if (input_scale.size() != 0 && !(input_scale.array() > 0.0).all())
      throw ValidationError("input scale must be positive");
  }
};

/**
 * @brief Feed-forward network with its parameters in one flat vector.
 *
 * Per layer, parameters are laid out as W (fan_out x fan_in, row-major),
 * b, then gamma and beta for normalized layers.
 */
class Mlp {
 public:
  /// Per-layer activations kept for the backward pass.
  struct Cache {
    std::vector<Matrix> inputs;  ///< input to each layer (standardized x for layer 0)
    std::vector<Matrix> xhat;    ///< normalized pre-activations (hidden layers)
    std::vector<Matrix> act;     ///< ELU input y = gamma * xhat + beta
    std::vector<RowVector> inv_std;
  };

  Mlp() = default;
  Mlp(MlpSpec spec, Vector params) : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (params_.size() != spec_.parameter_count())
      throw DimensionError("network expects " + std::to_string(spec_.parameter_count()) + " parameters, got " +
                           std::to_string(params_.size()));
  }

  /// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); unit gain, zero shift.
  static Mlp initialize(MlpSpec spec, Rng& rng, bool zero_output_layer = false) {
    spec.validate();
    Vector p(spec.parameter_count());
    Index off = 0;
    for (Index l = 0; l < spec.layer_count(); ++l) {
      const Index in = spec.fan_in(l), out = spec.fan_out(l);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      const bool zero = zero_output_layer && l == spec.layer_count() - 1;
      for (Index k = 0; k < out * in + out; ++k) p(off + k) = zero ? 0.0 : dist(rng);
      off += out * in + out;
      if (spec.normalized(l)) {
        p.segment(off, out).setOnes();
        p.segment(off + out, out).setZero();
        off += 2 * out;
      }
    }
    return Mlp(std::move(spec), std::move(p));
  }

  const MlpSpec& spec() const { return spec_; }
  const Vector& parameters() const { return params_; }
  Vector& parameters() { return params_; }
  Index parameter_count() const { return params_.size(); }

  Matrix standardize(const Matrix& x) const {
    Matrix a = x;
    if (spec_.input_shift.size()) a.colwise() -= spec_.input_shift;
    if (spec_.input_scale.size()) a.array().colwise() /= spec_.input_scale.array();
    return a;
  }

  Matrix forward(const Matrix& x) const {
    Cache c;
    return forward(x, c);
  }

  /// Column-wise evaluation; fills `cache` for backward().
  Matrix forward(const Matrix& x, Cache& cache) const {
    if (x.rows() != spec_.input_dim)
      throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                           std::to_string(spec_.input_dim));
    cache = Cache{};
    Matrix a = standardize(x);
    Index off = 0;
    const Index layers = spec_.layer_count();
    for (Index l = 0; l < layers; ++l) {
      const Index in = spec_.fan_in(l), out = spec_.fan_out(l);
      Eigen::Map<const RowMajorMatrix> w(params_.data() + off, out, in);
      Eigen::Map<const Vector> b(params_.data() + off + out * in, out);
      off += out * in + out;
      cache.inputs.push_back(a);
      Matrix z = w * a;
      z.colwise() += b;
      if (l == layers - 1) return z;

      if (spec_.normalized(l)) {
        Eigen::Map<const Vector> gamma(params_.data() + off, out);
        Eigen::Map<const Vector> beta(params_.data() + off + out, out);
        off += 2 * out;
        const RowVector mean = z.colwise().mean();
        z.rowwise() -= mean;
        const RowVector var = z.array().square().colwise().mean();
        const RowVector inv_std = (var.array() + kLayerNormEpsilon).rsqrt();
        z.array().rowwise() *= inv_std.array();
        cache.xhat.push_back(z);
        cache.inv_std.push_back(inv_std);
        z.array().colwise() *= gamma.array();
        z.colwise() += beta;
      } else {
        cache.xhat.emplace_back();
        cache.inv_std.emplace_back();
      }
      cache.act.push_back(z);
      a = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    }
    return a;  // unreachable: the output layer returns above
  }

  /// Gradient of sum(grad_out .* forward(x)) with respect to the parameters.
  Vector backward(const Cache& cache, const Matrix& grad_out) const {
    Vector grad = Vector::Zero(params_.size());
    const Index layers = spec_.layer_count();
    std::vector<Index> offsets(static_cast<std::size_t>(layers));
    Index off = 0;
    for (Index l = 0; l < layers; ++l) {
      offsets[static_cast<std::size_t>(l)] = off;
      off += spec_.layer_parameter_count(l);
    }

    Matrix delta = grad_out;  // gradient w.r.t. the affine output of layer l
    for (Index l = layers - 1; l >= 0; --l) {
      const Index in = spec_.fan_in(l), out = spec_.fan_out(l);
      const Index o = offsets[static_cast<std::size_t>(l)];
      const Matrix& a_in = cache.inputs[static_cast<std::size_t>(l)];
      Eigen::Map<RowMajorMatrix>(grad.data() + o, out, in) = delta * a_in.transpose();
      grad.segment(o + out * in, out) = delta.rowwise().sum();
      if (l == 0) break;

      Eigen::Map<const RowMajorMatrix> w(params_.data() + o, out, in);
      Matrix da = w.transpose() * delta;  // w.r.t. the output of layer l-1
      const Index prev = l - 1;
      const auto p = static_cast<std::size_t>(prev);
      const Matrix& y = cache.act[p];
      Matrix dy = da.array() * y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); }).array();
      if (spec_.normalized(prev)) {
        const Index width = spec_.fan_out(prev);
        const Index po = offsets[p] + width * spec_.fan_in(prev) + width;
        Eigen::Map<const Vector> gamma(params_.data() + po, width);
        const Matrix& xhat = cache.xhat[p];
        grad.segment(po, width) = (dy.array() * xhat.array()).rowwise().sum();
        grad.segment(po + width, width) = dy.rowwise().sum();
        Matrix dx = dy.array().colwise() * gamma.array();
        const RowVector mean_dx = dx.colwise().mean();
        const RowVector mean_dx_xhat = (dx.array() * xhat.array()).colwise().mean();
        dx.rowwise() -= mean_dx;
        dx -= (xhat.array().rowwise() * mean_dx_xhat.array()).matrix();
        dx.array().rowwise() *= cache.inv_std[p].array();
        delta = std::move(dx);
      } else {
        delta = std::move(dy);
      }
    }
    return grad;
  }

 private:
  MlpSpec spec_;
  Vector params_;
};

}  // namespace kcf::learning
