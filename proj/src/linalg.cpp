#include "pfl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pfl/error.hpp"

namespace pfl {

namespace {

// Jacobi on the columns of a (m ≥ n). On return the columns of `a` are
// mutually orthogonal and equal U·diag(s); `v` accumulates the rotations.
void orthogonalize_columns(Matrix& a, Matrix& v) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  for (int sweep = 0; sweep < kSvdMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double alpha = 0.0;
        double beta = 0.0;
        double gamma = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
          alpha += a(r, i) * a(r, i);
          beta += a(r, j) * a(r, j);
          gamma += a(r, i) * a(r, j);
        }
        if (gamma == 0.0 || std::abs(gamma) <= kSvdTolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t r = 0; r < m; ++r) {
          const double ai = a(r, i);
          const double aj = a(r, j);
          a(r, i) = c * ai - s * aj;
          a(r, j) = s * ai + c * aj;
        }
        for (std::size_t r = 0; r < v.rows(); ++r) {
          const double vi = v(r, i);
          const double vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericError("svd: no convergence after " + std::to_string(kSvdMaxSweeps) + " sweeps");
}

Svd svd_tall(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Matrix a = m;
  Matrix v = Matrix::identity(n);
  orthogonalize_columns(a, v);

  Vector norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += a(r, j) * a(r, j);
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(rows, n), Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = norms[j];
    for (std::size_t r = 0; r < n; ++r) out.v(r, k) = v(r, j);
    if (norms[j] > 0.0) {
      for (std::size_t r = 0; r < rows; ++r) out.u(r, k) = a(r, j) / norms[j];
    } else {
      // Null direction: any unit vector keeps U·diag(s)·Vᵀ exact.
      out.u(std::min(k, rows - 1), k) = 1.0;
    }
  }
  return out;
}

}  // namespace

Svd svd(const Matrix& m) {
  if (m.empty()) throw InputError("svd: empty matrix");
  if (!m.all_finite()) throw NumericError("svd: non-finite entries");
  if (m.rows() >= m.cols()) return svd_tall(m);
  Svd t = svd_tall(m.transpose());
  return Svd{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
}

Rank1 svd_rank1(const Matrix& m) {
  const Svd full = svd(m);
  Rank1 r;
  r.s1 = full.singular_values.front();
  r.u1.resize(m.rows());
  r.v1.resize(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) r.u1[i] = full.u(i, 0);
  for (std::size_t i = 0; i < m.cols(); ++i) r.v1[i] = full.v(i, 0);

  const auto largest = std::max_element(r.v1.begin(), r.v1.end(),
                                        [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (*largest < 0.0) {
    for (auto& x : r.u1) x = -x;
    for (auto& x : r.v1) x = -x;
  }
  r.reconstruction = Matrix::outer(r.u1, r.v1);
  for (auto& x : r.reconstruction.data()) x *= r.s1;
  return r;
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> theta, double h) {
  if (!(h >= 1e-6 && h <= 1e-4)) throw InputError("finite_diff_grad: step outside [1e-6, 1e-4]");
  Vector probe(theta.begin(), theta.end());
  Vector grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double plus = f(probe);
    probe[i] = theta[i] - h;
    const double minus = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_diff_grad: non-finite value at coordinate " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

}  // namespace pfl
