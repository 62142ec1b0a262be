#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pfl {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Throws ShapeError when data.size() != rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix outer(std::span<const double> a, std::span<const double> b);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  [[nodiscard]] Matrix transpose() const;
  [[nodiscard]] double frobenius_norm() const;
  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// W·x + b. Throws ShapeError on mismatched dimensions.
Vector affine(const Matrix& W, std::span<const double> b, std::span<const double> x);

/// W·x
Vector matvec(const Matrix& W, std::span<const double> x);
/// Wᵀ·y
Vector matvec_transposed(const Matrix& W, std::span<const double> y);
Matrix matmul(const Matrix& A, const Matrix& B);
Matrix subtract(const Matrix& A, const Matrix& B);

/// M += scale · a bᵀ
void add_outer(Matrix& M, std::span<const double> a, std::span<const double> b, double scale = 1.0);
/// y += scale · x
void axpy(double scale, std::span<const double> x, std::span<double> y);

Vector relu(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> x);
double squared_distance(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> x);

}  // namespace pfl
