#pragma once

#include "kcf/core.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace kcf {

/// Largest admissible cond(M M^T) before a matrix is treated as rank deficient.
inline constexpr double kGramConditionLimit = 1e10;

/**
 * @brief Cholesky factorization of the Gram matrix M M^T of a wide matrix M.
 *
 * Construction fails with RankError when M cannot have full row rank
 * (fewer columns than rows, non-finite entries) or when cond(M M^T)
 * exceeds the limit. All solves against (M M^T)^{-1} go through here.
 */
class GramFactor {
 public:
  GramFactor(const Matrix& m, std::string name, double condition_limit = kGramConditionLimit)
      : name_(std::move(name)), rows_(m.rows()) {
    if (m.rows() == 0) throw DimensionError(name_ + " has no rows");
    if (m.cols() < m.rows()) {
      throw RankError(name_, std::numeric_limits<double>::infinity(),
                      name_ + " (" + shape_str(m) + ") cannot have full row rank: fewer columns than rows");
    }
    if (!m.allFinite()) {
      throw RankError(name_, std::numeric_limits<double>::infinity(), name_ + " contains non-finite entries");
    }
    gram_.noalias() = m * m.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues()(0);
    const double hi = eig.eigenvalues()(rows_ - 1);
    condition_ = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(condition_ <= condition_limit)) {
      throw RankError(name_, condition_,
                      name_ + " is not full row rank: cond(M M^T) = " + std::to_string(condition_) + " > " +
                          std::to_string(condition_limit));
    }
    llt_.compute(gram_);
    if (llt_.info() != Eigen::Success) {
      throw RankError(name_, condition_, name_ + ": Cholesky factorization of M M^T failed");
    }
  }

  const std::string& name() const { return name_; }
  Index rows() const { return rows_; }
  double condition() const { return condition_; }
  const Matrix& gram() const { return gram_; }

  /// (M M^T)^{-1} B
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }

  /// B (M M^T)^{-1}
  Matrix solve_right(const Matrix& b) const { return llt_.solve(b.transpose()).transpose(); }

  Matrix inverse() const { return llt_.solve(Matrix::Identity(rows_, rows_)); }

 private:
  std::string name_;
  Index rows_;
  Matrix gram_;
  Eigen::LLT<Matrix> llt_;
  double condition_ = 0.0;
};

/// Moore-Penrose pseudoinverse of a full-row-rank matrix, M^T (M M^T)^{-1}.
inline Matrix pinv_full_row_rank(const Matrix& m, const std::string& name = "M") {
  GramFactor f(m, name);
  return f.solve_right(m.transpose());
}

/// Thin QR of M^T: M = R^T Q^T with Q^T having orthonormal rows spanning row(M).
struct RowOrthonormalization {
  Matrix q;  ///< N x r, orthonormal columns
  Matrix r;  ///< r x r, upper triangular
};

inline RowOrthonormalization orthonormalize_rows(const Matrix& m) {
  const Index r = m.rows();
  Eigen::HouseholderQR<Matrix> qr(m.transpose());
  RowOrthonormalization out;
  out.q = qr.householderQ() * Matrix::Identity(m.cols(), r);
  out.r = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  return out;
}

/// Exact 2-norm condition number via singular values.
inline double condition_number(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  Eigen::BDCSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

}  // namespace kcf
