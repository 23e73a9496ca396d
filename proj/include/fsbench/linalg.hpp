#pragma once

// Dense row-major linear algebra: just enough for PCA and the linear regressors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fsbench/error.hpp"

namespace fsbench {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require(rows >= 1 && cols >= 1, Errc::ShapeError, "matrix dimensions must be at least 1x1");
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(rows >= 1 && cols >= 1, Errc::ShapeError, "matrix dimensions must be at least 1x1");
    require(data_.size() == rows * cols, Errc::ShapeError,
            "data length " + std::to_string(data_.size()) + " != " + std::to_string(rows) + "x" +
                std::to_string(cols));
  }

  /// Builds from nested rows; all rows must share one length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    require(!rows.empty() && !rows.front().empty(), Errc::ShapeError, "empty matrix literal");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].size() == m.cols_, Errc::ShapeError, "ragged matrix literal");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  Vector column(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), Errc::ShapeError,
          "matmul inner dimensions " + std::to_string(a.cols()) + " and " +
              std::to_string(b.rows()));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), Errc::ShapeError, "matvec width mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
  }
  return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline Matrix select_columns(const Matrix& x, std::span<const std::size_t> columns) {
  Matrix out(x.rows(), columns.size());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < columns.size(); ++j) out(i, j) = x(i, columns[j]);
  return out;
}

inline Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

inline Vector column_means(const Matrix& x) {
  Vector mu(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) mu[j] += x(i, j);
  for (auto& m : mu) m /= static_cast<double>(x.rows());
  return mu;
}

/// Population covariance (1/n normalization).
inline Matrix covariance(const Matrix& x) {
  require(x.rows() >= 2, Errc::InsufficientRows, "covariance needs at least 2 rows");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const Vector mu = column_means(x);
  Matrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      const double da = r[a] - mu[a];
      for (std::size_t b = a; b < d; ++b) cov(a, b) += da * (r[b] - mu[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n);
      cov(b, a) = cov(a, b);
    }
  return cov;
}

struct EigenResult {
  Vector eigenvalues;  // non-increasing
  Matrix eigenvectors; // column j pairs with eigenvalues[j]
};

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) sum += a(i, j) * a(i, j);
  return std::sqrt(sum);
}

inline double frobenius_norm(const Matrix& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v * v;
  return std::sqrt(sum);
}

}  // namespace detail

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// 1e-10 * max(1, ||A||_F). Eigenvalues come back sorted non-increasing (ties keep
/// their diagonal order) and each eigenvector is signed so that its largest-magnitude
/// entry is non-negative.
inline EigenResult eig_symmetric(const Matrix& input) {
  constexpr double kSymmetryTol = 1e-9;
  constexpr double kOffTol = 1e-10;
  constexpr int kMaxSweeps = 100;

  require(input.rows() == input.cols(), Errc::ShapeError, "eig_symmetric needs a square matrix");
  const std::size_t n = input.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      require(std::abs(input(i, j) - input(j, i)) <= kSymmetryTol, Errc::NotSymmetric,
              "entries (" + std::to_string(i) + "," + std::to_string(j) + ") differ");

  Matrix a = input;
  Matrix v = Matrix::identity(n);
  const double threshold = kOffTol * std::max(1.0, detail::frobenius_norm(a));

  int sweep = 0;
  while (detail::off_diagonal_norm(a) >= threshold) {
    if (sweep++ == kMaxSweeps) throw ConvergenceError("Jacobi eigensolver", kMaxSweeps);
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return a(l, l) > a(r, r); });

  EigenResult result{Vector(n), Matrix(n, n)};
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    result.eigenvalues[j] = a(src, src);
    std::size_t pivot = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(v(k, src)) > std::abs(v(pivot, src))) pivot = k;
    const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < n; ++k) result.eigenvectors(k, j) = sign * v(k, src);
  }
  return result;
}

/// Least squares via Householder QR. Throws RankDeficient when any |R_jj| falls
/// below 1e-12 * max|R|.
inline Vector lstsq(const Matrix& x, std::span<const double> y) {
  require(y.size() == x.rows(), Errc::ShapeError, "lstsq: target length != rows");
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  require(n >= p, Errc::RankDeficient,
          "lstsq: " + std::to_string(n) + " rows cannot determine " + std::to_string(p) +
              " coefficients");

  Matrix r = x;
  Vector b(y.begin(), y.end());
  Vector u(n);
  for (std::size_t j = 0; j < p; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < n; ++i) norm += r(i, j) * r(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = r(j, j) > 0.0 ? -norm : norm;
    for (std::size_t i = j; i < n; ++i) u[i] = r(i, j);
    u[j] -= alpha;
    double unorm2 = 0.0;
    for (std::size_t i = j; i < n; ++i) unorm2 += u[i] * u[i];
    if (unorm2 == 0.0) continue;
    for (std::size_t k = j; k < p; ++k) {
      double proj = 0.0;
      for (std::size_t i = j; i < n; ++i) proj += u[i] * r(i, k);
      proj = 2.0 * proj / unorm2;
      for (std::size_t i = j; i < n; ++i) r(i, k) -= proj * u[i];
    }
    double proj = 0.0;
    for (std::size_t i = j; i < n; ++i) proj += u[i] * b[i];
    proj = 2.0 * proj / unorm2;
    for (std::size_t i = j; i < n; ++i) b[i] -= proj * u[i];
  }

  double rmax = 0.0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = i; k < p; ++k) rmax = std::max(rmax, std::abs(r(i, k)));
  for (std::size_t j = 0; j < p; ++j)
    require(rmax > 0.0 && std::abs(r(j, j)) >= 1e-12 * rmax, Errc::RankDeficient,
            "column " + std::to_string(j) + " is linearly dependent on earlier columns");

  Vector beta(p);
  for (std::size_t jj = p; jj-- > 0;) {
    double acc = b[jj];
    for (std::size_t k = jj + 1; k < p; ++k) acc -= r(jj, k) * beta[k];
    beta[jj] = acc / r(jj, jj);
  }
  return beta;
}

}  // namespace fsbench
