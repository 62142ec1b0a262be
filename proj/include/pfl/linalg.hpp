#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "pfl/matrix.hpp"

namespace pfl {

/// Thin SVD, M = U · diag(singular_values) · Vᵀ, values sorted descending.
/// U is m×r and V is n×r with r = min(m, n).
struct Svd {
  Matrix u;
  Vector singular_values;
  Matrix v;
};

/// Best rank-1 approximation M1 = s1 · u1 v1ᵀ.
struct Rank1 {
  Vector u1;
  double s1 = 0.0;
  Vector v1;
  Matrix reconstruction;
};

inline constexpr double kSvdTolerance = 1e-12;
inline constexpr int kSvdMaxSweeps = 10'000;

/// One-sided (Hestenes) Jacobi SVD. Throws NumericError on non-finite input
/// or when kSvdMaxSweeps sweeps do not converge.
Svd svd(const Matrix& m);

/// Top singular triple and its reconstruction. v1 is signed so that its
/// largest-magnitude entry is positive.
Rank1 svd_rank1(const Matrix& m);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient (f(θ+h·eᵢ) − f(θ−h·eᵢ)) / 2h.
/// Throws InputError when h is outside [1e-6, 1e-4], NumericError when f is
/// non-finite at a probe point.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double h);

}  // namespace pfl
