#pragma once

#include "kcf/dictionary.hpp"
#include "kcf/learning/mlp.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace kcf::learning {

/// H(x) from a network whose pinned outputs are replaced by raw state coordinates.
class NeuralStateDictionary final : public StateDictionaryImpl {
 public:
  NeuralStateDictionary(Mlp net, std::vector<Index> pinned) : net_(std::move(net)), pinned_(std::move(pinned)) {
    for (Index p : pinned_) {
      if (p < 0 || p >= net_.spec().output_dim || p >= net_.spec().input_dim)
        throw ValidationError("pinned output " + std::to_string(p) + " is not a valid state coordinate");
    }
  }

  Index state_dim() const override { return net_.spec().input_dim; }
  Index size() const override { return net_.spec().output_dim; }
  DictionaryKind kind() const override { return DictionaryKind::neural; }
  const Mlp& network() const { return net_; }
  const std::vector<Index>& pinned() const { return pinned_; }

  Matrix eval(const Matrix& x) const override {
    Matrix out = net_.forward(x);
    pin(x, out);
    return out;
  }

  void pin(const Matrix& x, Matrix& out) const {
    for (Index p : pinned_) out.row(p) = x.row(p);
  }

 private:
  Mlp net_;
  std::vector<Index> pinned_;
};

/// G(u) read row-major from a network with (n_Psi - n_H) * n_H outputs.
class NeuralInputFactor final : public InputFactorImpl {
 public:
  NeuralInputFactor(Mlp net, Index rows, Index cols) : net_(std::move(net)), rows_(rows), cols_(cols) {
    if (rows_ <= 0 || cols_ <= 0 || net_.spec().output_dim != rows_ * cols_)
      throw DimensionError("input-factor network must output rows * cols values");
  }

  Index input_dim() const override { return net_.spec().input_dim; }
  Index rows() const override { return rows_; }
  Index cols() const override { return cols_; }
  InputStructure structure() const override { return InputStructure::general; }
  const Mlp& network() const { return net_; }

  Matrix eval(const Vector& u) const override {
    const Matrix flat = net_.forward(Matrix(u));
    return Eigen::Map<const RowMajorMatrix>(flat.data(), rows_, cols_);
  }

  Matrix apply(const Matrix& u, const Matrix& h) const override { return apply_flat(net_.forward(u), h, rows_, cols_); }

  /// Column i: reshape(flat_i) * h_i
  static Matrix apply_flat(const Matrix& flat, const Matrix& h, Index rows, Index cols) {
    Matrix out(rows, h.cols());
    for (Index i = 0; i < h.cols(); ++i)
      out.col(i) = Eigen::Map<const RowMajorMatrix>(flat.col(i).data(), rows, cols) * h.col(i);
    return out;
  }

 private:
  Mlp net_;
  Index rows_, cols_;
};

}  // namespace kcf::learning
