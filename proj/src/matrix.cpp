#include "pfl/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfl/error.hpp"

namespace pfl {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::outer(std::span<const double> a, std::span<const double> b) {
  Matrix m(a.size(), b.size());
  add_outer(m, a, b);
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius_norm() const { return norm(data_); }

bool Matrix::all_finite() const { return pfl::all_finite(data_); }

Vector affine(const Matrix& W, std::span<const double> b, std::span<const double> x) {
  require(W.cols() == x.size(), "affine: cols(W) != len(x)");
  require(W.rows() == b.size(), "affine: rows(W) != len(b)");
  Vector y(b.begin(), b.end());
  for (std::size_t r = 0; r < W.rows(); ++r) y[r] += dot(W.row(r), x);
  return y;
}

Vector matvec(const Matrix& W, std::span<const double> x) {
  require(W.cols() == x.size(), "matvec: cols(W) != len(x)");
  Vector y(W.rows());
  for (std::size_t r = 0; r < W.rows(); ++r) y[r] = dot(W.row(r), x);
  return y;
}

Vector matvec_transposed(const Matrix& W, std::span<const double> y) {
  require(W.rows() == y.size(), "matvec_transposed: rows(W) != len(y)");
  Vector x(W.cols(), 0.0);
  for (std::size_t r = 0; r < W.rows(); ++r) axpy(y[r], W.row(r), x);
  return x;
}

Matrix matmul(const Matrix& A, const Matrix& B) {
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Matrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = 0; k < A.cols(); ++k) axpy(A(i, k), B.row(k), C.row(i));
  return C;
}

Matrix subtract(const Matrix& A, const Matrix& B) {
  require(A.rows() == B.rows() && A.cols() == B.cols(), "subtract: shapes differ");
  Matrix C = A;
  axpy(-1.0, B.data(), C.data());
  return C;
}

void add_outer(Matrix& M, std::span<const double> a, std::span<const double> b, double scale) {
  require(M.rows() == a.size() && M.cols() == b.size(), "add_outer: shape mismatch");
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double s = scale * a[r];
    if (s != 0.0) axpy(s, b, M.row(r));
  }
}

void axpy(double scale, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

Vector relu(std::span<const double> x) {
  Vector y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "squared_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace pfl
