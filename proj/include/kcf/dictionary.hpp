#pragma once

#include "kcf/core.hpp"
#include "kcf/expression.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace kcf {

enum class DictionaryKind { analytic, neural, polynomial };
enum class InputStructure { general, lifted_linear, bilinear };

inline const char* to_string(DictionaryKind k) {
  switch (k) {
    case DictionaryKind::analytic: return "analytic";
    case DictionaryKind::neural: return "neural";
    case DictionaryKind::polynomial: return "polynomial";
  }
  return "?";
}

inline const char* to_string(InputStructure s) {
  switch (s) {
    case InputStructure::general: return "general";
    case InputStructure::lifted_linear: return "lifted-linear";
    case InputStructure::bilinear: return "bilinear";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// State dictionaries H : R^n -> R^{n_H}

class StateDictionaryImpl {
 public:
  virtual ~StateDictionaryImpl() = default;
  virtual Index state_dim() const = 0;
  virtual Index size() const = 0;
  virtual DictionaryKind kind() const = 0;
  /// Column i of the result is H(X.col(i)). X is already shape-checked.
  virtual Matrix eval(const Matrix& x) const = 0;
};

/// Value handle around an immutable dictionary implementation.
class StateDictionary {
 public:
  StateDictionary() = default;
  explicit StateDictionary(std::shared_ptr<const StateDictionaryImpl> impl) : impl_(std::move(impl)) {
    if (!impl_) throw ValidationError("null state dictionary");
  }

  Index state_dim() const { return impl_->state_dim(); }
  Index size() const { return impl_->size(); }
  DictionaryKind kind() const { return impl_->kind(); }
  const StateDictionaryImpl& impl() const { return *impl_; }
  const std::shared_ptr<const StateDictionaryImpl>& impl_ptr() const { return impl_; }
  bool valid() const { return static_cast<bool>(impl_); }

  /// H(X) = [H(x_1), ..., H(x_N)]
  Matrix operator()(const Matrix& x) const {
    if (x.rows() != state_dim()) {
      throw DimensionError("state matrix has " + std::to_string(x.rows()) + " rows, dictionary expects n = " +
                           std::to_string(state_dim()));
    }
    if (x.cols() == 0) return Matrix(size(), 0);
    return impl_->eval(x);
  }

  Vector operator()(const Vector& x) const { return (*this)(Matrix(x)).col(0); }

 private:
  std::shared_ptr<const StateDictionaryImpl> impl_;
};

/// Closed-form dictionary built from expressions in the state coordinates.
class ExpressionStateDictionary final : public StateDictionaryImpl {
 public:
  ExpressionStateDictionary(Index state_dim, std::vector<Expr> functions)
      : n_(state_dim), functions_(std::move(functions)) {
    if (n_ <= 0) throw ValidationError("state dimension must be positive");
    if (functions_.empty()) throw ValidationError("dictionary needs at least one function");
    polynomial_ = true;
    for (const auto& f : functions_) {
      if (f.max_variable() >= n_) throw DimensionError("dictionary function references a coordinate beyond n");
      polynomial_ = polynomial_ && f.is_polynomial();
    }
  }

  Index state_dim() const override { return n_; }
  Index size() const override { return static_cast<Index>(functions_.size()); }
  DictionaryKind kind() const override { return polynomial_ ? DictionaryKind::polynomial : DictionaryKind::analytic; }
  const std::vector<Expr>& functions() const { return functions_; }

  /// True when some slot is literally a constant expression.
  bool has_constant_slot() const {
    for (const auto& f : functions_)
      if (f.op() == Expr::Op::constant) return true;
    return false;
  }

  Matrix eval(const Matrix& x) const override {
    Matrix out(size(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const auto col = x.col(j);
      for (Index i = 0; i < size(); ++i) out(i, j) = functions_[static_cast<std::size_t>(i)].eval(col);
    }
    return out;
  }

 private:
  Index n_;
  std::vector<Expr> functions_;
  bool polynomial_ = false;
};

/// [inner(x); 1], the constant function appended as the last slot.
class ConstantAugmentedDictionary final : public StateDictionaryImpl {
 public:
  explicit ConstantAugmentedDictionary(StateDictionary inner) : inner_(std::move(inner)) {}

  Index state_dim() const override { return inner_.state_dim(); }
  Index size() const override { return inner_.size() + 1; }
  DictionaryKind kind() const override { return inner_.kind(); }
  const StateDictionary& inner() const { return inner_; }

  Matrix eval(const Matrix& x) const override {
    Matrix out(size(), x.cols());
    out.topRows(inner_.size()) = inner_.impl().eval(x);
    out.row(inner_.size()).setOnes();
    return out;
  }

 private:
  StateDictionary inner_;
};

/// T * inner(x) for a fixed square invertible T.
class TransformedStateDictionary final : public StateDictionaryImpl {
 public:
  TransformedStateDictionary(Matrix transform, StateDictionary inner)
      : transform_(std::move(transform)), inner_(std::move(inner)) {
    if (transform_.rows() != inner_.size() || transform_.cols() != inner_.size())
      throw DimensionError("state transform must be n_H x n_H");
  }

  Index state_dim() const override { return inner_.state_dim(); }
  Index size() const override { return inner_.size(); }
  DictionaryKind kind() const override { return inner_.kind(); }
  const Matrix& transform() const { return transform_; }
  const StateDictionary& inner() const { return inner_; }

  Matrix eval(const Matrix& x) const override { return transform_ * inner_.impl().eval(x); }

 private:
  Matrix transform_;
  StateDictionary inner_;
};

inline StateDictionary expression_dictionary(Index state_dim, std::vector<Expr> functions) {
  return StateDictionary(std::make_shared<ExpressionStateDictionary>(state_dim, std::move(functions)));
}

/// H(x) = x
inline StateDictionary identity_dictionary(Index state_dim) {
  std::vector<Expr> f;
  for (Index i = 0; i < state_dim; ++i) f.push_back(var(i));
  return expression_dictionary(state_dim, std::move(f));
}

/// Monomials of total degree 1..max_degree (no constant).
inline StateDictionary polynomial_dictionary(Index state_dim, int max_degree) {
  return expression_dictionary(state_dim, monomials(state_dim, max_degree));
}

// ---------------------------------------------------------------------------
// Input factors G : R^m -> R^{(n_Psi - n_H) x n_H}

class InputFactorImpl {
 public:
  virtual ~InputFactorImpl() = default;
  virtual Index input_dim() const = 0;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual InputStructure structure() const = 0;
  virtual Matrix eval(const Vector& u) const = 0;

  /// Column i of the result is G(u_i) h_i. Shapes are already checked.
  virtual Matrix apply(const Matrix& u, const Matrix& h) const {
    Matrix out(rows(), u.cols());
    for (Index i = 0; i < u.cols(); ++i) out.col(i) = eval(u.col(i)) * h.col(i);
    return out;
  }
};

class InputFactor {
 public:
  InputFactor() = default;
  explicit InputFactor(std::shared_ptr<const InputFactorImpl> impl) : impl_(std::move(impl)) {
    if (!impl_) throw ValidationError("null input factor");
  }

  Index input_dim() const { return impl_->input_dim(); }
  Index rows() const { return impl_->rows(); }
  Index cols() const { return impl_->cols(); }
  InputStructure structure() const { return impl_->structure(); }
  const InputFactorImpl& impl() const { return *impl_; }
  const std::shared_ptr<const InputFactorImpl>& impl_ptr() const { return impl_; }
  bool valid() const { return static_cast<bool>(impl_); }

  Matrix operator()(const Vector& u) const {
    if (u.size() != input_dim()) {
      throw DimensionError("input has length " + std::to_string(u.size()) + ", input factor expects m = " +
                           std::to_string(input_dim()));
    }
    return impl_->eval(u);
  }

  /// [G(u_1) h_1, ..., G(u_N) h_N]
  Matrix apply(const Matrix& u, const Matrix& h) const {
    if (u.rows() != input_dim()) throw DimensionError("input matrix row count differs from m");
    if (h.rows() != cols()) throw DimensionError("lifted state row count differs from n_H");
    if (u.cols() != h.cols()) throw DimensionError("input and lifted state column counts differ");
    if (u.cols() == 0) return Matrix(rows(), 0);
    return impl_->apply(u, h);
  }

 private:
  std::shared_ptr<const InputFactorImpl> impl_;
};

/// G(u) = [0_{m x (n_H - 1)}, u]: the last H slot is taken to be the constant function.
class LiftedLinearInputFactor final : public InputFactorImpl {
 public:
  LiftedLinearInputFactor(Index m, Index n_h) : m_(m), n_h_(n_h) {
    if (m_ <= 0 || n_h_ <= 0) throw ValidationError("lifted-linear factor needs m > 0 and n_H > 0");
  }
  Index input_dim() const override { return m_; }
  Index rows() const override { return m_; }
  Index cols() const override { return n_h_; }
  InputStructure structure() const override { return InputStructure::lifted_linear; }

  Matrix eval(const Vector& u) const override {
    Matrix g = Matrix::Zero(m_, n_h_);
    g.col(n_h_ - 1) = u;
    return g;
  }
  Matrix apply(const Matrix& u, const Matrix& h) const override {
    return u.array().rowwise() * h.row(n_h_ - 1).array();
  }

 private:
  Index m_, n_h_;
};

/// G(u) = [u_1 I; u_2 I; ...; u_m I]
class BilinearInputFactor final : public InputFactorImpl {
 public:
  BilinearInputFactor(Index m, Index n_h) : m_(m), n_h_(n_h) {
    if (m_ <= 0 || n_h_ <= 0) throw ValidationError("bilinear factor needs m > 0 and n_H > 0");
  }
  Index input_dim() const override { return m_; }
  Index rows() const override { return m_ * n_h_; }
  Index cols() const override { return n_h_; }
  InputStructure structure() const override { return InputStructure::bilinear; }

  Matrix eval(const Vector& u) const override {
    Matrix g = Matrix::Zero(rows(), n_h_);
    for (Index k = 0; k < m_; ++k) g.block(k * n_h_, 0, n_h_, n_h_).diagonal().setConstant(u(k));
    return g;
  }
  Matrix apply(const Matrix& u, const Matrix& h) const override {
    Matrix out(rows(), u.cols());
    for (Index k = 0; k < m_; ++k) out.middleRows(k * n_h_, n_h_) = h.array().rowwise() * u.row(k).array();
    return out;
  }

 private:
  Index m_, n_h_;
};

/// General closed-form factor: entries (row-major) are expressions in u.
class ExpressionInputFactor final : public InputFactorImpl {
 public:
  ExpressionInputFactor(Index m, Index rows, Index cols, std::vector<Expr> entries)
      : m_(m), rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (m_ <= 0 || rows_ <= 0 || cols_ <= 0) throw ValidationError("input factor dimensions must be positive");
    if (static_cast<Index>(entries_.size()) != rows_ * cols_)
      throw DimensionError("input factor needs rows*cols expressions");
    for (const auto& e : entries_)
      if (e.max_variable() >= m_) throw DimensionError("input factor entry references an input beyond m");
  }
  Index input_dim() const override { return m_; }
  Index rows() const override { return rows_; }
  Index cols() const override { return cols_; }
  InputStructure structure() const override { return InputStructure::general; }
  const std::vector<Expr>& entries() const { return entries_; }

  Matrix eval(const Vector& u) const override {
    Matrix g(rows_, cols_);
    for (Index i = 0; i < rows_; ++i)
      for (Index j = 0; j < cols_; ++j) g(i, j) = entries_[static_cast<std::size_t>(i * cols_ + j)].eval(u);
    return g;
  }

 private:
  Index m_, rows_, cols_;
  std::vector<Expr> entries_;
};

/// G'(u) = (R21 + R22 G(u)) R11^{-1}; the factor of a changed normal basis.
class TransformedInputFactor final : public InputFactorImpl {
 public:
  TransformedInputFactor(Matrix r21, Matrix r22, Matrix r11_inv, InputFactor inner)
      : r21_(std::move(r21)), r22_(std::move(r22)), r11_inv_(std::move(r11_inv)), inner_(std::move(inner)) {
    const Index ng = inner_.rows(), nh = inner_.cols();
    if (r21_.rows() != ng || r21_.cols() != nh || r22_.rows() != ng || r22_.cols() != ng || r11_inv_.rows() != nh ||
        r11_inv_.cols() != nh)
      throw DimensionError("transformed input factor blocks do not conform");
  }
  Index input_dim() const override { return inner_.input_dim(); }
  Index rows() const override { return inner_.rows(); }
  Index cols() const override { return inner_.cols(); }
  // The closed-form structure does not survive a general change of basis.
  InputStructure structure() const override { return InputStructure::general; }
  const Matrix& r21() const { return r21_; }
  const Matrix& r22() const { return r22_; }
  const Matrix& r11_inv() const { return r11_inv_; }
  const InputFactor& inner() const { return inner_; }

  Matrix eval(const Vector& u) const override { return (r21_ + r22_ * inner_.impl().eval(u)) * r11_inv_; }
  Matrix apply(const Matrix& u, const Matrix& h) const override {
    const Matrix h_inner = r11_inv_ * h;
    return r21_ * h_inner + r22_ * inner_.impl().apply(u, h_inner);
  }

 private:
  Matrix r21_, r22_, r11_inv_;
  InputFactor inner_;
};

// ---------------------------------------------------------------------------
// Normal separable basis Psi = [I; G] H

class NormalBasis {
 public:
  NormalBasis() = default;
  NormalBasis(StateDictionary h, InputFactor g) : h_(std::move(h)), g_(std::move(g)) {
    if (!h_.valid() || !g_.valid()) throw ValidationError("normal basis needs both H and G");
    if (g_.cols() != h_.size()) {
      throw DimensionError("G has " + std::to_string(g_.cols()) + " columns but H has n_H = " +
                           std::to_string(h_.size()) + " functions");
    }
    if (g_.rows() < 1) throw ValidationError("degenerate normal basis: G must have at least one row (n_Psi > n_H)");
  }

  const StateDictionary& state_dictionary() const { return h_; }
  const InputFactor& input_factor() const { return g_; }
  Index state_dim() const { return h_.state_dim(); }
  Index input_dim() const { return g_.input_dim(); }
  Index n_h() const { return h_.size(); }
  Index n_psi() const { return h_.size() + g_.rows(); }
  InputStructure structure() const { return g_.structure(); }
  DictionaryKind kind() const { return h_.kind(); }

  /// Psi(X, U) = [H(X); G(u_i) H(x_i) column-wise]
  Matrix operator()(const Matrix& x, const Matrix& u) const {
    if (x.cols() != u.cols()) {
      throw DimensionError("X has " + std::to_string(x.cols()) + " columns but U has " + std::to_string(u.cols()));
    }
    const Matrix hx = h_(x);
    return lift(hx, u);
  }

  Vector operator()(const Vector& x, const Vector& u) const { return (*this)(Matrix(x), Matrix(u)).col(0); }

  /// Psi from an already evaluated H(X).
  Matrix lift(const Matrix& hx, const Matrix& u) const {
    Matrix out(n_psi(), hx.cols());
    out.topRows(n_h()) = hx;
    out.bottomRows(g_.rows()) = g_.apply(u, hx);
    return out;
  }

 private:
  StateDictionary h_;
  InputFactor g_;
};

// ---------------------------------------------------------------------------
// Operations

inline Matrix eval_H(const StateDictionary& h, const Matrix& x) { return h(x); }

inline Matrix eval_G(const InputFactor& g, const Vector& u) { return g(u); }

inline Matrix eval_psi(const NormalBasis& basis, const Matrix& x, const Matrix& u) { return basis(x, u); }

/// H = [H_bar; 1], G(u) = [0, u]. n_Psi = dim(H_bar) + 1 + m.
inline NormalBasis make_lifted_linear(const StateDictionary& h_bar, Index m) {
  if (const auto* e = dynamic_cast<const ExpressionStateDictionary*>(&h_bar.impl()); e && e->has_constant_slot())
    throw ValidationError("H_bar already declares a constant slot; the lifted-linear basis appends its own");
  if (dynamic_cast<const ConstantAugmentedDictionary*>(&h_bar.impl()))
    throw ValidationError("H_bar already carries an appended constant function");
  StateDictionary h(std::make_shared<ConstantAugmentedDictionary>(h_bar));
  return NormalBasis(h, InputFactor(std::make_shared<LiftedLinearInputFactor>(m, h.size())));
}

/// G(u) = [u_1 I; ...; u_m I]. n_Psi = (m + 1) n_H.
inline NormalBasis make_bilinear(const StateDictionary& h, Index m) {
  return NormalBasis(h, InputFactor(std::make_shared<BilinearInputFactor>(m, h.size())));
}

/// Relative Frobenius tolerance on the R12 block of a change-of-basis matrix.
inline constexpr double kChangeOfBasisR12Tolerance = 1e-9;

/**
 * @brief The normal basis R * Psi.
 *
 * R must be block lower triangular (R12 = 0 to tolerance) with R11 and R22
 * invertible; only then is R * Psi again in normal form, with
 * H' = R11 H and G'(u) = (R21 + R22 G(u)) R11^{-1}.
 */
inline NormalBasis change_of_basis(const NormalBasis& basis, const Matrix& r) {
  const Index np = basis.n_psi(), nh = basis.n_h(), ng = np - nh;
  if (r.rows() != np || r.cols() != np)
    throw DimensionError("change of basis matrix must be " + shape_str(np, np) + ", got " + shape_str(r));
  const double r12 = r.topRightCorner(nh, ng).norm();
  if (!(r12 <= kChangeOfBasisR12Tolerance * r.norm()))
    throw ValidationError("change of basis violates normal form: ||R12||_F = " + std::to_string(r12));
  Eigen::FullPivLU<Matrix> lu11(r.topLeftCorner(nh, nh));
  Eigen::FullPivLU<Matrix> lu22(r.bottomRightCorner(ng, ng));
  if (!lu11.isInvertible()) throw ValidationError("change of basis has singular R11");
  if (!lu22.isInvertible()) throw ValidationError("change of basis matrix is singular (R22)");

  const Matrix r11 = r.topLeftCorner(nh, nh);
  StateDictionary h(std::make_shared<TransformedStateDictionary>(r11, basis.state_dictionary()));
  InputFactor g(std::make_shared<TransformedInputFactor>(r.bottomLeftCorner(ng, nh), r.bottomRightCorner(ng, ng),
                                                         lu11.inverse(), basis.input_factor()));
  return NormalBasis(std::move(h), std::move(g));
}

}  // namespace kcf
