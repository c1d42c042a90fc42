#pragma once

// Random problems and independent reference computations shared by the
// unit tests and the acceptance runner.

#include "kcf/kcf.hpp"

#include <algorithm>
#include <vector>

namespace kcf::fixtures {

struct RawProblem {
  Matrix j;  ///< n_H x N
  Matrix l;  ///< n_Psi x N
};

/// J = C L + noise * G, so the consistency level varies with `noise`.
inline RawProblem random_raw_problem(Index nh, Index npsi, Index n, double noise, Rng& rng) {
  RawProblem p;
  p.l = gaussian_matrix(npsi, n, rng);
  p.j = gaussian_matrix(nh, npsi, rng) * p.l + noise * gaussian_matrix(nh, n, rng);
  return p;
}

/// Dimensions drawn as n_H in [2, 6], n_Psi in [n_H + 1, 12], N in [n_Psi + 1, 60].
inline RawProblem random_sized_problem(Rng& rng) {
  const auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); };
  const Index nh = pick(2, 6);
  const Index npsi = pick(nh + 1, 12);
  const Index n = pick(npsi + 1, 60);
  const double noise = std::pow(10.0, std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
  return random_raw_problem(nh, npsi, n, noise, rng);
}

/// Orthonormal basis of the row space (as rows), via SVD rather than QR.
inline Matrix svd_row_basis(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(m.rows()).transpose();
}

/// I - Jbar P_L Jbar^T with SVD-based Jbar and projector.
inline Matrix reference_symmetric_target(const Matrix& j, const Matrix& l) {
  const Matrix jb = svd_row_basis(j);
  const Matrix lb = svd_row_basis(l);
  const Matrix proj = lb.transpose() * lb;
  return Matrix::Identity(j.rows(), j.rows()) - jb * proj * jb.transpose();
}

/// Eigenvalues of M_CC = I - J L^+ L J^+ built from SVD pseudoinverses, sorted by real part.
inline Eigen::VectorXcd reference_mcc_spectrum(const Matrix& j, const Matrix& l) {
  const Matrix jp = j.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix lp = l.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix m = Matrix::Identity(j.rows(), j.rows()) - j * lp * l * jp;
  Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(m, false).eigenvalues();
  std::sort(ev.data(), ev.data() + ev.size(), [](auto a, auto b) { return a.real() < b.real(); });
  return ev;
}

/// Block lower-triangular change of basis with well-conditioned diagonal blocks.
inline Matrix random_block_lower(Index nh, Index npsi, Rng& rng) {
  Matrix r = gaussian_matrix(npsi, npsi, rng);
  r.topRightCorner(nh, npsi - nh).setZero();
  r.topLeftCorner(nh, nh) += 4.0 * Matrix::Identity(nh, nh);
  r.bottomRightCorner(npsi - nh, npsi - nh) += 4.0 * Matrix::Identity(npsi - nh, npsi - nh);
  return r;
}

/// Stable random A (spectral radius 0.9) for synthetic fixtures.
inline Matrix random_stable(Index n, Rng& rng) {
  Matrix a = gaussian_matrix(n, n, rng);
  const double rho = Eigen::EigenSolver<Matrix>(a, false).eigenvalues().cwiseAbs().maxCoeff();
  return (0.9 / rho) * a;
}

/// Uniform random unit vector.
inline Vector random_unit(Index n, Rng& rng) {
  Vector v = gaussian_matrix(n, 1, rng).col(0);
  return v / v.norm();
}

/// Small parametric basis plus a batch on which its loss is well defined.
/// Narrow normalized layers (width <= 4) give ill-conditioned Grams; prefer 8 or more.
struct ToyProblem {
  learning::ParametricBasis basis;
  Matrix x, x_plus, u;
};

inline ToyProblem toy_problem(learning::ModelClass cls, Index batch, std::vector<Index> hidden, Rng& rng) {
  learning::ParametricBasisShape shape;
  shape.model_class = cls;
  shape.n = 2;
  shape.m = 1;
  shape.n_h = 3;
  shape.n_psi = 5;
  shape.hidden = std::move(hidden);
  shape.pinned = 1;
  ToyProblem t{learning::make_parametric_basis(shape, rng), gaussian_matrix(2, batch, rng),
               Matrix(), gaussian_matrix(1, batch, rng)};
  t.x_plus = 0.8 * t.x + 0.3 * t.x.array().sin().matrix();
  t.x_plus.row(1) += 0.5 * t.u.row(0);
  // Move parameters away from the initialization symmetries (unit gain, zero shift).
  Vector p = t.basis.parameters();
  p += 0.2 * gaussian_matrix(p.size(), 1, rng).col(0);
  t.basis.set_parameters(p);
  return t;
}

struct GradientCheck {
  double relative_error = 0.0;          ///< |g - fd| / max(|g|, |fd|), Euclidean norms
  double max_coordinate_error = 0.0;    ///< worst |g_k - fd_k| / max(|g_k|, |fd_k|, 1e-3 max|g|)
  Index worst_index = -1;
};

/// Reverse-mode gradient against central differences with step h.
inline GradientCheck check_gradient(const ToyProblem& t, const learning::LossWeights& w, double h = 1e-5) {
  const Vector g = learning::evaluate_loss(t.basis, t.x, t.x_plus, t.u, w, true).gradient;
  const double scale = g.cwiseAbs().maxCoeff();
  learning::ParametricBasis probe = t.basis;
  const Vector p0 = t.basis.parameters();
  Vector fd(p0.size());
  GradientCheck out;
  for (Index k = 0; k < p0.size(); ++k) {
    Vector p = p0;
    p(k) += h;
    probe.set_parameters(p);
    const double up = learning::evaluate_loss(probe, t.x, t.x_plus, t.u, w, false).terms.value;
    p(k) -= 2.0 * h;
    probe.set_parameters(p);
    const double down = learning::evaluate_loss(probe, t.x, t.x_plus, t.u, w, false).terms.value;
    fd(k) = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(g(k)), std::abs(fd(k)), 1e-3 * scale});
    const double rel = std::abs(g(k) - fd(k)) / denom;
    if (rel > out.max_coordinate_error) {
      out.max_coordinate_error = rel;
      out.worst_index = k;
    }
  }
  out.relative_error = (g - fd).norm() / std::max(g.norm(), fd.norm());
  return out;
}

}  // namespace kcf::fixtures
