#pragma once

#include <utility>
#include <vector>

#include "lpvsd/lpv_core.hpp"

namespace lpvsd {

/// Matrix expression affine in scalar decision variables:
/// constant + sum_k x_k * coeff_k, with dense coefficients sorted by variable.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(int rows, int cols) : constant_(Matrix::Zero(rows, cols)) {}
  explicit LinExpr(Matrix constant) : constant_(std::move(constant)) {}

  /// x_var * coeff
  static LinExpr variable(int var, Matrix coeff);

  int rows() const { return static_cast<int>(constant_.rows()); }
  int cols() const { return static_cast<int>(constant_.cols()); }
  const Matrix& constant() const { return constant_; }
  const std::vector<std::pair<int, Matrix>>& terms() const { return terms_; }

  Matrix evaluate(const Vector& x) const;
  LinExpr transpose() const;

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator*(const Matrix& m, const LinExpr& e);
  friend LinExpr operator*(const LinExpr& e, const Matrix& m);

  /// Block matrix from a grid of expressions with consistent sizes.
  static LinExpr blocks(const std::vector<std::vector<LinExpr>>& grid);

 private:
  Matrix constant_;
  std::vector<std::pair<int, Matrix>> terms_;
};

// Uniform helpers so the same assembly code serves numeric matrices and
// symbolic expressions.
inline Matrix transpose_of(const Matrix& m) { return m.transpose(); }
inline LinExpr transpose_of(const LinExpr& e) { return e.transpose(); }

Matrix block_matrix(const std::vector<std::vector<Matrix>>& grid);
inline LinExpr block_matrix(const std::vector<std::vector<LinExpr>>& grid) {
  return LinExpr::blocks(grid);
}

/// s * I_k for a 1x1 expression s.
Matrix scaled_identity(const Matrix& scalar, int k);
LinExpr scaled_identity(const LinExpr& scalar, int k);

template <class T>
T zero_like(int rows, int cols);
template <>
inline Matrix zero_like<Matrix>(int rows, int cols) {
  return Matrix::Zero(rows, cols);
}
template <>
inline LinExpr zero_like<LinExpr>(int rows, int cols) {
  return LinExpr(rows, cols);
}

template <class T>
T constant_like(const Matrix& m);
template <>
inline Matrix constant_like<Matrix>(const Matrix& m) {
  return m;
}
template <>
inline LinExpr constant_like<LinExpr>(const Matrix& m) {
  return LinExpr(m);
}

}  // namespace lpvsd
