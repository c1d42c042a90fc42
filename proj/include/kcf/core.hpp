#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace kcf {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

inline constexpr const char* kVersion = "0.3.0";

/// Failure category. Maps onto the CLI exit codes (2, 3, 4).
enum class ErrorKind { validation, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string tag, const std::string& what)
      : std::runtime_error(what), kind_(kind), tag_(std::move(tag)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable tag ("dimension", "rank", "divergence", ...).
  const std::string& tag() const noexcept { return tag_; }

 private:
  ErrorKind kind_;
  std::string tag_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::validation, "dimension", what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, "validation", what) {}
};

/// A matrix that must have full row rank does not (or is too ill-conditioned to tell).
class RankError : public Error {
 public:
  RankError(std::string matrix, double condition, const std::string& what)
      : Error(ErrorKind::numerical, "rank", what), matrix_(std::move(matrix)), condition_(condition) {}

  const std::string& matrix() const noexcept { return matrix_; }
  /// Estimated condition number of M M^T; +inf when the Gram matrix is not positive definite.
  double condition() const noexcept { return condition_; }

 private:
  std::string matrix_;
  double condition_;
};

class NumericalError : public Error {
 public:
  NumericalError(std::string tag, const std::string& what) : Error(ErrorKind::numerical, std::move(tag), what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, "io", what) {}
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_str(const Eigen::MatrixBase<Derived>& m) {
  return shape_str(m.rows(), m.cols());
}

/// Matrix with i.i.d. standard normal entries.
inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  // Column-major fill order is part of the seeded contract.
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline Matrix uniform_matrix(Index rows, Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace kcf
