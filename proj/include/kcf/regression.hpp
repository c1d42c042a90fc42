#pragma once

#include "kcf/core.hpp"
#include "kcf/dictionary.hpp"
#include "kcf/linalg.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kcf {

/**
 * @brief Paired transitions x_i^+ = T(x_i, u_i), one per column.
 *
 * The empirical measure is uniform over columns. `train_mask[i] != 0`
 * marks column i as training data.
 */
struct SnapshotDataset {
  Matrix x;
  Matrix x_plus;
  Matrix u;
  std::vector<std::uint8_t> train_mask;

  SnapshotDataset() = default;
  SnapshotDataset(Matrix x_, Matrix x_plus_, Matrix u_)
      : x(std::move(x_)), x_plus(std::move(x_plus_)), u(std::move(u_)),
        train_mask(static_cast<std::size_t>(x.cols()), 1) {
    validate();
  }

  Index size() const { return x.cols(); }
  Index state_dim() const { return x.rows(); }
  Index input_dim() const { return u.rows(); }

  void validate() const {
    if (x.cols() < 1) throw DimensionError("dataset needs at least one snapshot");
    if (x_plus.cols() != x.cols() || u.cols() != x.cols()) {
      throw DimensionError("X, X+, U column counts differ: " + std::to_string(x.cols()) + ", " +
                           std::to_string(x_plus.cols()) + ", " + std::to_string(u.cols()));
    }
    if (x_plus.rows() != x.rows()) throw DimensionError("X and X+ row counts differ");
    if (static_cast<Index>(train_mask.size()) != x.cols()) throw DimensionError("split mask length differs from N");
  }

  std::vector<Index> indices(bool training) const {
    std::vector<Index> idx;
    for (std::size_t i = 0; i < train_mask.size(); ++i)
      if ((train_mask[i] != 0) == training) idx.push_back(static_cast<Index>(i));
    return idx;
  }

  SnapshotDataset subset(const std::vector<Index>& cols) const {
    SnapshotDataset out;
    out.x = x(Eigen::all, cols);
    out.x_plus = x_plus(Eigen::all, cols);
    out.u = u(Eigen::all, cols);
    out.train_mask.reserve(cols.size());
    for (Index c : cols) out.train_mask.push_back(train_mask[static_cast<std::size_t>(c)]);
    return out;
  }

  SnapshotDataset train_split() const { return subset(indices(true)); }
  SnapshotDataset test_split() const { return subset(indices(false)); }
};

struct FitDiagnostics {
  double residual_fro = 0.0;  ///< ||H(X+) - [A11, A12] Psi(X,U)||_F
  double cond_psi = 0.0;      ///< 2-norm condition number of Psi(X,U)
  double cond_h_plus = 0.0;   ///< 2-norm condition number of H(X+)
  Index samples = 0;
};

/**
 * @brief Input-state separable model z+ = (A11 + A12 G(u)) z on a normal basis.
 */
struct FittedModel {
  Matrix a11;
  Matrix a12;
  NormalBasis basis;
  FitDiagnostics diagnostics;

  Index n_h() const { return a11.rows(); }

  /// A(u) = A11 + A12 G(u)
  Matrix transition(const Vector& u) const { return a11 + a12 * basis.input_factor()(u); }

  /// [A11, A12]
  Matrix top_block() const {
    Matrix p(a11.rows(), a11.cols() + a12.cols());
    p << a11, a12;
    return p;
  }

  void validate() const {
    if (a11.rows() != basis.n_h() || a11.cols() != basis.n_h())
      throw DimensionError("A11 must be n_H x n_H, got " + shape_str(a11));
    if (a12.rows() != basis.n_h() || a12.cols() != basis.n_psi() - basis.n_h())
      throw DimensionError("A12 must be n_H x (n_Psi - n_H), got " + shape_str(a12));
  }
};

inline void check_dataset_against_basis(const NormalBasis& basis, const SnapshotDataset& data) {
  data.validate();
  if (data.state_dim() != basis.state_dim())
    throw DimensionError("dataset state dimension " + std::to_string(data.state_dim()) + " differs from basis n = " +
                         std::to_string(basis.state_dim()));
  if (data.input_dim() != basis.input_dim())
    throw DimensionError("dataset input dimension " + std::to_string(data.input_dim()) + " differs from basis m = " +
                         std::to_string(basis.input_dim()));
}

/// A = Psi(X+, U) Psi(X, U)^dagger
inline Matrix edmd_full(const NormalBasis& basis, const SnapshotDataset& data) {
  check_dataset_against_basis(basis, data);
  const Matrix l = basis(data.x, data.u);
  const Matrix l_plus = basis(data.x_plus, data.u);
  GramFactor gram(l, "Psi(X,U)");
  return gram.solve_right(l_plus * l.transpose());
}

/// [A11, A12] = J L^dagger for raw J = H(X+), L = Psi(X,U).
inline Matrix forward_regression(const Matrix& j, const Matrix& l) {
  if (j.cols() != l.cols()) throw DimensionError("J and L column counts differ");
  GramFactor gram(l, "Psi(X,U)");
  return gram.solve_right(j * l.transpose());
}

/// [A11, A12] = H(X+) Psi(X,U)^dagger, without forming the full EDMD matrix.
inline FittedModel fit_top_block(const NormalBasis& basis, const SnapshotDataset& data) {
  check_dataset_against_basis(basis, data);
  const Matrix j = basis.state_dictionary()(data.x_plus);
  const Matrix l = basis(data.x, data.u);
  const Matrix p = forward_regression(j, l);

  FittedModel model;
  model.a11 = p.leftCols(basis.n_h());
  model.a12 = p.rightCols(basis.n_psi() - basis.n_h());
  model.basis = basis;
  model.diagnostics.residual_fro = (j - p * l).norm();
  model.diagnostics.cond_psi = condition_number(l);
  model.diagnostics.cond_h_plus = condition_number(j);
  model.diagnostics.samples = data.size();
  return model;
}

struct ForwardBackward {
  Matrix a_f;  ///< n_H x n_Psi, J L^dagger
  Matrix a_b;  ///< n_Psi x n_H, L J^dagger
  double gram_cond_l = 0.0;
  double gram_cond_j = 0.0;
};

/// Forward (Psi -> H(X+)) and backward (H(X+) -> Psi) least-squares maps.
inline ForwardBackward forward_backward(const Matrix& j, const Matrix& l) {
  if (j.cols() != l.cols())
    throw DimensionError("J (" + shape_str(j) + ") and L (" + shape_str(l) + ") column counts differ");
  GramFactor gl(l, "Psi(X,U)");
  GramFactor gj(j, "H(X+)");
  const Matrix jlt = j * l.transpose();
  ForwardBackward out;
  out.a_f = gl.solve_right(jlt);
  out.a_b = gj.solve_right(jlt.transpose());
  out.gram_cond_l = gl.condition();
  out.gram_cond_j = gj.condition();
  return out;
}

inline ForwardBackward forward_backward(const NormalBasis& basis, const SnapshotDataset& data) {
  check_dataset_against_basis(basis, data);
  return forward_backward(basis.state_dictionary()(data.x_plus), basis(data.x, data.u));
}

}  // namespace kcf
