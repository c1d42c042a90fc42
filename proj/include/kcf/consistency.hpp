#pragma once

#include "kcf/core.hpp"
#include "kcf/linalg.hpp"
#include "kcf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kcf {

struct ConsistencyDiagnostics {
  double max_imag = 0.0;     ///< largest |Im(lambda)| of the non-symmetric M_CC
  double gram_cond_j = 0.0;  ///< cond(J J^T)
  double gram_cond_l = 0.0;  ///< cond(L L^T)
  double cci_raw = 0.0;      ///< lambda_max before clipping into [0, 1]
  Index samples = 0;
};

/**
 * @brief Certified accuracy of an input-state separable model on one dataset.
 *
 * `cci` is the largest eigenvalue of M_CC and `rrmse_max = sqrt(cci)` is the
 * exact worst-case relative RMS one-step error over every h in span(H).
 * `worst_direction` is the unit eigenvector w in orthonormalized
 * coordinates; `pullback` is the v with v^T H = w^T Jbar attaining it.
 */
struct ConsistencyReport {
  Matrix m_cc;
  Vector eigenvalues;  ///< ascending
  double cci = 0.0;
  double trace = 0.0;
  double rrmse_max = 0.0;
  Vector worst_direction;
  Vector pullback;
  ConsistencyDiagnostics diagnostics;
};

/// M_CC = I - A_f A_b
inline Matrix consistency_matrix(const Matrix& a_f, const Matrix& a_b) {
  if (a_f.cols() != a_b.rows() || a_f.rows() != a_b.cols())
    throw DimensionError("A_f (" + shape_str(a_f) + ") and A_b (" + shape_str(a_b) + ") do not conform");
  return Matrix::Identity(a_f.rows(), a_f.rows()) - a_f * a_b;
}

/// R^{-1} M_CC R with R = (J J^T)^{1/2}; symmetric and similar to M_CC.
inline Matrix symmetrized(const Matrix& m_cc, const Matrix& j) {
  if (m_cc.rows() != j.rows() || m_cc.cols() != j.rows())
    throw DimensionError("M_CC must be " + shape_str(j.rows(), j.rows()));
  GramFactor gj(j, "H(X+)");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gj.gram());
  return eig.operatorInverseSqrt() * m_cc * eig.operatorSqrt();
}

struct TraceBounds {
  double trace = 0.0;
  double lower = 0.0;  ///< trace / n_H <= cci
  double upper = 0.0;  ///< cci <= trace
};

inline TraceBounds trace_proxy(const Matrix& m_cc) {
  if (m_cc.rows() != m_cc.cols() || m_cc.rows() == 0) throw DimensionError("M_CC must be square and non-empty");
  const double t = m_cc.trace();
  return {t, t / static_cast<double>(m_cc.rows()), t};
}

/**
 * @brief Certify raw J = H(X+) (n_H x N) against L = Psi(X,U) (n_Psi x N).
 *
 * The spectrum is taken from the symmetric I - Jbar L^dagger L Jbar^T. With
 * orthonormal Jbar (thin QR of J^T) this equals E^T E for the residual
 * E = (I - P_L) Jbar^T, which is what is factored, so eigenvalues stay
 * non-negative in floating point.
 */
inline ConsistencyReport certify(const Matrix& j, const Matrix& l) {
  const ForwardBackward fb = forward_backward(j, l);
  const Index nh = j.rows();

  ConsistencyReport rep;
  rep.m_cc = consistency_matrix(fb.a_f, fb.a_b);
  rep.trace = rep.m_cc.trace();
  rep.diagnostics.gram_cond_j = fb.gram_cond_j;
  rep.diagnostics.gram_cond_l = fb.gram_cond_l;
  rep.diagnostics.samples = j.cols();

  Eigen::EigenSolver<Matrix> general(rep.m_cc, false);
  if (general.info() != Eigen::Success) throw NumericalError("eigensolver", "eigensolver failed on M_CC");
  rep.diagnostics.max_imag = general.eigenvalues().imag().cwiseAbs().maxCoeff();

  const RowOrthonormalization jq = orthonormalize_rows(j);
  const RowOrthonormalization lq = orthonormalize_rows(l);
  const Matrix residual = jq.q - lq.q * (lq.q.transpose() * jq.q);
  const Matrix sym = residual.transpose() * residual;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigensolver", "symmetric eigensolver failed");
  rep.eigenvalues = eig.eigenvalues();
  rep.diagnostics.cci_raw = rep.eigenvalues(nh - 1);
  rep.cci = std::clamp(rep.diagnostics.cci_raw, 0.0, 1.0);
  rep.rrmse_max = std::sqrt(rep.cci);

  Vector w = eig.eigenvectors().col(nh - 1);
  Index k = 0;
  w.cwiseAbs().maxCoeff(&k);
  if (w(k) < 0) w = -w;
  rep.worst_direction = w;
  // J = R^T Jbar, so v^T J = w^T Jbar  <=>  R v = w.
  rep.pullback = jq.r.triangularView<Eigen::Upper>().solve(w);
  return rep;
}

inline ConsistencyReport certify(const NormalBasis& basis, const SnapshotDataset& data) {
  check_dataset_against_basis(basis, data);
  return certify(basis.state_dictionary()(data.x_plus), basis(data.x, data.u));
}

/**
 * @brief Evaluates the one-step RRMSE of h = v^T H under a fitted model.
 *
 * Truth and prediction matrices are computed once, so many directions v
 * can be probed cheaply against the same data.
 */
class FunctionErrorProbe {
 public:
  FunctionErrorProbe(const FittedModel& model, const SnapshotDataset& data) {
    model.validate();
    check_dataset_against_basis(model.basis, data);
    truth_ = model.basis.state_dictionary()(data.x_plus);
    const Matrix l = model.basis(data.x, data.u);
    residual_ = truth_ - model.top_block() * l;
  }

  /// Raw-matrix form: prediction from the forward regression of J on L.
  FunctionErrorProbe(const Matrix& j, const Matrix& l) : truth_(j) { residual_ = j - forward_regression(j, l) * l; }

  Index n_h() const { return truth_.rows(); }

  double operator()(const Vector& v) const {
    if (v.size() != n_h()) throw DimensionError("function coefficients must have length n_H");
    const double denom = (v.transpose() * truth_).squaredNorm();
    if (!(denom > 0.0)) throw NumericalError("zero-denominator", "h vanishes on every successor state");
    const double num = (v.transpose() * residual_).squaredNorm();
    return std::sqrt(num / denom);
  }

 private:
  Matrix truth_;
  Matrix residual_;
};

/// sqrt( sum |h(x_i+) - P h(x_i,u_i)|^2 / sum |h(x_i+)|^2 ) with h = v^T H.
inline double rrmse_of_function(const Vector& v, const FittedModel& model, const SnapshotDataset& data) {
  return FunctionErrorProbe(model, data)(v);
}

}  // namespace kcf
