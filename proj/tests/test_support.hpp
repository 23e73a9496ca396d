#pragma once

// Helpers shared by the unit and acceptance suites: random instances and
// independent reference computations that do not reuse library code paths.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fsbench/error.hpp"
#include "fsbench/linalg.hpp"
#include "fsbench/random.hpp"

namespace fsbench::testing {

#define EXPECT_ERRC(expr, errc)                                                  \
  do {                                                                           \
    try {                                                                        \
      (void)(expr);                                                              \
      ADD_FAILURE() << #expr " did not throw " << ::fsbench::to_string(errc);    \
    } catch (const ::fsbench::Error& e_) {                                       \
      EXPECT_EQ(e_.code(), errc) << e_.what();                                   \
    }                                                                            \
  } while (0)

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Xoshiro256& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (auto& v : m.row(i)) v = rng.normal();
  return m;
}

inline Matrix random_symmetric(std::size_t n, Xoshiro256& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.uniform() * 4.0 - 2.0;
  return m;
}

/// Solves the square system A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

/// beta = (X^T X)^-1 X^T y, optionally with an all-ones column prepended.
inline std::vector<double> normal_equations(const Matrix& x, const std::vector<double>& y,
                                            bool intercept) {
  const std::size_t p = x.cols() + (intercept ? 1 : 0);
  auto at = [&](std::size_t i, std::size_t j) {
    if (intercept) return j == 0 ? 1.0 : x(i, j - 1);
    return x(i, j);
  };
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < p; ++a) {
      xty[a] += at(i, a) * y[i];
      for (std::size_t b = 0; b < p; ++b) xtx[a][b] += at(i, a) * at(i, b);
    }
  return gauss_solve(std::move(xtx), std::move(xty));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// 2-norm condition number of a full-column-rank matrix via the Jacobi-free power
/// iteration on X^T X and its inverse; good enough to reject ill-conditioned draws.
inline double condition_number(const Matrix& x) {
  const std::size_t p = x.cols();
  std::vector<std::vector<double>> g(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) g[a][b] += x(i, a) * x(i, b);
  auto power = [&](bool inverse) {
    std::vector<double> v(p, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      std::vector<double> w(p, 0.0);
      if (inverse) {
        w = gauss_solve(g, v);
      } else {
        for (std::size_t a = 0; a < p; ++a)
          for (std::size_t b = 0; b < p; ++b) w[a] += g[a][b] * v[b];
      }
      double norm = 0.0;
      for (double e : w) norm += e * e;
      norm = std::sqrt(norm);
      for (std::size_t a = 0; a < p; ++a) v[a] = w[a] / norm;
      lambda = norm;
    }
    return lambda;
  };
  return std::sqrt(power(false) * power(true));
}

}  // namespace fsbench::testing
