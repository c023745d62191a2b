#include "lpvsd/linexpr.hpp"

#include <stdexcept>

namespace lpvsd {

namespace {

using Terms = std::vector<std::pair<int, Matrix>>;

// Merge b (scaled) into a; both sorted by variable.
Terms merge(const Terms& a, const Terms& b, double scale) {
  Terms out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.emplace_back(b[j].first, scale * b[j].second);
      ++j;
    } else {
      out.emplace_back(a[i].first, a[i].second + scale * b[j].second);
      ++i;
      ++j;
    }
  }
  return out;
}

void require_same_shape(const LinExpr& a, const LinExpr& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("LinExpr shape mismatch");
  }
}

}  // namespace

LinExpr LinExpr::variable(int var, Matrix coeff) {
  LinExpr e(Matrix::Zero(coeff.rows(), coeff.cols()));
  e.terms_.emplace_back(var, std::move(coeff));
  return e;
}

Matrix LinExpr::evaluate(const Vector& x) const {
  Matrix out = constant_;
  for (const auto& [var, c] : terms_) out += x[var] * c;
  return out;
}

LinExpr LinExpr::transpose() const {
  LinExpr out(Matrix(constant_.transpose()));
  out.terms_.reserve(terms_.size());
  for (const auto& [var, c] : terms_) out.terms_.emplace_back(var, c.transpose());
  return out;
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  require_same_shape(*this, o);
  constant_ += o.constant_;
  terms_ = merge(terms_, o.terms_, 1.0);
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  require_same_shape(*this, o);
  constant_ -= o.constant_;
  terms_ = merge(terms_, o.terms_, -1.0);
  return *this;
}

LinExpr& LinExpr::operator*=(double s) {
  constant_ *= s;
  for (auto& t : terms_) t.second *= s;
  return *this;
}

LinExpr operator*(const Matrix& m, const LinExpr& e) {
  if (m.cols() != e.rows()) throw std::invalid_argument("LinExpr product shape mismatch");
  LinExpr out(Matrix(m * e.constant_));
  out.terms_.reserve(e.terms_.size());
  for (const auto& [var, c] : e.terms_) out.terms_.emplace_back(var, m * c);
  return out;
}

LinExpr operator*(const LinExpr& e, const Matrix& m) {
  if (e.cols() != m.rows()) throw std::invalid_argument("LinExpr product shape mismatch");
  LinExpr out(Matrix(e.constant_ * m));
  out.terms_.reserve(e.terms_.size());
  for (const auto& [var, c] : e.terms_) out.terms_.emplace_back(var, c * m);
  return out;
}

LinExpr LinExpr::blocks(const std::vector<std::vector<LinExpr>>& grid) {
  if (grid.empty() || grid.front().empty()) return LinExpr();
  std::vector<int> heights, widths;
  for (const auto& row : grid) heights.push_back(row.front().rows());
  for (const auto& e : grid.front()) widths.push_back(e.cols());
  int total_r = 0, total_c = 0;
  for (int h : heights) total_r += h;
  for (int w : widths) total_c += w;

  LinExpr out(total_r, total_c);
  Terms acc;
  int r0 = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].size() != widths.size()) throw std::invalid_argument("ragged block grid");
    int c0 = 0;
    for (std::size_t j = 0; j < grid[i].size(); ++j) {
      const auto& e = grid[i][j];
      if (e.rows() != heights[i] || e.cols() != widths[j]) {
        throw std::invalid_argument("block grid sizes are inconsistent");
      }
      out.constant_.block(r0, c0, e.rows(), e.cols()) = e.constant_;
      Terms placed;
      placed.reserve(e.terms_.size());
      for (const auto& [var, c] : e.terms_) {
        Matrix full = Matrix::Zero(total_r, total_c);
        full.block(r0, c0, c.rows(), c.cols()) = c;
        placed.emplace_back(var, std::move(full));
      }
      acc = merge(acc, placed, 1.0);
      c0 += widths[j];
    }
    r0 += heights[i];
  }
  out.terms_ = std::move(acc);
  return out;
}

Matrix block_matrix(const std::vector<std::vector<Matrix>>& grid) {
  if (grid.empty() || grid.front().empty()) return Matrix();
  int total_r = 0, total_c = 0;
  for (const auto& row : grid) total_r += static_cast<int>(row.front().rows());
  for (const auto& m : grid.front()) total_c += static_cast<int>(m.cols());
  Matrix out(total_r, total_c);
  int r0 = 0;
  for (const auto& row : grid) {
    int c0 = 0;
    for (const auto& m : row) {
      if (m.rows() != row.front().rows()) throw std::invalid_argument("ragged block row");
      out.block(r0, c0, m.rows(), m.cols()) = m;
      c0 += static_cast<int>(m.cols());
    }
    if (c0 != total_c) throw std::invalid_argument("block grid widths are inconsistent");
    r0 += static_cast<int>(row.front().rows());
  }
  return out;
}

Matrix scaled_identity(const Matrix& scalar, int k) {
  return scalar(0, 0) * Matrix::Identity(k, k);
}

LinExpr scaled_identity(const LinExpr& scalar, int k) {
  LinExpr out(Matrix(scalar.constant()(0, 0) * Matrix::Identity(k, k)));
  for (const auto& [var, c] : scalar.terms()) {
    out += LinExpr::variable(var, c(0, 0) * Matrix::Identity(k, k));
  }
  return out;
}

}  // namespace lpvsd
