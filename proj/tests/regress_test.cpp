#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsbench/data.hpp"
#include "fsbench/regress.hpp"
#include "test_support.hpp"

namespace fsbench {
namespace {

Matrix column(const Vector& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

Matrix standardized(Matrix x) { return fit_standardizer(x).apply(x); }

/// (1/n) X_j^T (y - b0 - X beta) for every column j.
Vector lasso_gradient(const Matrix& x, const Vector& y, const LinearModel& m) {
  const Vector pred = predict(m, x);
  Vector g(x.cols(), 0.0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < x.rows(); ++i) g[j] += x(i, j) * (y[i] - pred[i]);
    g[j] /= static_cast<double>(x.rows());
  }
  return g;
}

void expect_kkt(const Matrix& x, const Vector& y, const LinearModel& m, double lambda) {
  const Vector g = lasso_gradient(x, y, m);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (m.coefficients[j] != 0.0)
      EXPECT_NEAR(g[j], lambda * (m.coefficients[j] > 0 ? 1.0 : -1.0), 1e-6) << "column " << j;
    else
      EXPECT_LE(std::abs(g[j]), lambda + 1e-6) << "column " << j;
  }
}

TEST(Ols, ExactLine) {
  const LinearModel m = fit_ols(column({1, 2, 3}), Vector{3, 5, 7});
  EXPECT_NEAR(m.intercept, 1.0, 1e-12);
  EXPECT_NEAR(m.coefficients[0], 2.0, 1e-12);
}

TEST(Ols, ConstantTarget) {
  const LinearModel m = fit_ols(Matrix::from_rows({{1, 0}, {2, 1}, {0, 3}, {4, 4}}), Vector(4, 6.5));
  EXPECT_NEAR(m.intercept, 6.5, 1e-12);
  for (double b : m.coefficients) EXPECT_NEAR(b, 0.0, 1e-12);
}

TEST(Ols, MatchesNormalEquations) {
  Xoshiro256 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const std::size_t n = d + 5 + rng.below(50);
    const Matrix x = testing::random_matrix(n, d, rng);
    Vector y(n);
    for (auto& v : y) v = rng.normal() * 3.0;
    const Vector oracle = testing::normal_equations(x, y, true);
    const LinearModel m = fit_ols(x, y);
    EXPECT_NEAR(m.intercept, oracle[0], 1e-8);
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(m.coefficients[j], oracle[j + 1], 1e-8);
  }
}

TEST(Ols, RankDeficientPropagates) {
  EXPECT_ERRC(fit_ols(Matrix::from_rows({{1, 2}, {2, 4}, {3, 6}}), Vector{1, 2, 3}),
              Errc::RankDeficient);
}

TEST(Ridge, ZeroPenaltyEqualsOls) {
  Xoshiro256 rng(32);
  const Matrix x = testing::random_matrix(30, 4, rng);
  Vector y(30);
  for (auto& v : y) v = rng.normal();
  const LinearModel ols = fit_ols(x, y), ridge = fit_ridge(x, y, 0.0);
  EXPECT_NEAR(ridge.intercept, ols.intercept, 1e-9);
  EXPECT_LE(testing::max_abs_diff(ridge.coefficients, ols.coefficients), 1e-9);
}

TEST(Ridge, HandSolvedPenaltyForm) {
  // X^T X = 14, X^T y = 14, so beta = 14 / (14 + 1).
  const Vector beta = ridge_solve(column({1, 2, 3}), Vector{1, 2, 3}, 1.0);
  EXPECT_NEAR(beta[0], 14.0 / 15.0, 1e-12);
  EXPECT_NEAR(beta[0], 0.9333, 1e-4);
}

TEST(Ridge, LargePenaltyShrinksToZero) {
  Xoshiro256 rng(33);
  const Matrix x = standardized(testing::random_matrix(40, 3, rng));
  Vector y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = 5 * x(i, 0) - 2 * x(i, 2) + rng.normal();
  const LinearModel m = fit_ridge(x, y, 1e6);
  for (double b : m.coefficients) EXPECT_LT(std::abs(b), 1e-3);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 40.0;
  EXPECT_NEAR(m.intercept, mean, 1e-3);
}

TEST(Ridge, MatchesPenalizedNormalEquations) {
  Xoshiro256 rng(34);
  const Matrix x = testing::random_matrix(25, 3, rng);
  Vector y(25);
  for (auto& v : y) v = rng.normal();
  const double lambda = 0.7;
  // Oracle on centered data: (Xc^T Xc + n lambda I) beta = Xc^T yc.
  const Vector mu = column_means(x);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / 25.0;
  std::vector<std::vector<double>> a(3, std::vector<double>(3, 0.0));
  Vector b(3, 0.0);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t p = 0; p < 3; ++p) {
      b[p] += (x(i, p) - mu[p]) * (y[i] - ybar);
      for (std::size_t q = 0; q < 3; ++q) a[p][q] += (x(i, p) - mu[p]) * (x(i, q) - mu[q]);
    }
  for (std::size_t p = 0; p < 3; ++p) a[p][p] += 25.0 * lambda;
  const Vector oracle = testing::gauss_solve(a, b);
  const LinearModel m = fit_ridge(x, y, lambda);
  EXPECT_LE(testing::max_abs_diff(m.coefficients, oracle), 1e-10);
  EXPECT_NEAR(m.intercept, ybar - dot(mu, oracle), 1e-10);
}

TEST(Ridge, NormIsMonotoneInLambda) {
  Xoshiro256 rng(35);
  const Matrix x = standardized(testing::random_matrix(50, 5, rng));
  Vector y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = x(i, 0) - 3 * x(i, 3) + 0.5 * rng.normal();
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0}) {
    const LinearModel m = fit_ridge(x, y, lambda);
    const double norm = std::sqrt(dot(m.coefficients, m.coefficients));
    EXPECT_LE(norm, previous + 1e-12) << "lambda " << lambda;
    previous = norm;
  }
  EXPECT_ERRC(fit_ridge(x, y, -1.0), Errc::ParamError);
}

TEST(Lasso, LambdaMaxGivesExactZeros) {
  Xoshiro256 rng(36);
  const Matrix x = standardized(testing::random_matrix(60, 4, rng));
  Vector y(60);
  for (std::size_t i = 0; i < 60; ++i) y[i] = 2 * x(i, 1) + rng.normal();
  const double lambda_max = lasso_lambda_max(x, y);
  const LinearModel m = fit_lasso(x, y, 1.01 * lambda_max);
  for (double b : m.coefficients) EXPECT_EQ(b, 0.0);
  const LinearModel below = fit_lasso(x, y, 0.9 * lambda_max);
  EXPECT_NE(below.coefficients[1], 0.0);
}

TEST(Lasso, OrthonormalSoftThreshold) {
  // (1/n) X^T X = I and OLS coefficients are (1.0, 0.5); soft-thresholding by 0.4.
  const Matrix x = Matrix::from_rows({{1, 1}, {-1, 1}, {1, -1}, {-1, -1}});
  Vector y(4);
  for (std::size_t i = 0; i < 4; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1);
  const LinearModel m = fit_lasso(x, y, 0.4);
  EXPECT_NEAR(m.coefficients[0], soft_threshold(1.0, 0.4), 1e-12);
  EXPECT_NEAR(m.coefficients[0], 0.6, 1e-12);
  EXPECT_NEAR(m.coefficients[1], 0.1, 1e-12);
  expect_kkt(x, y, m, 0.4);
}

TEST(Lasso, VanishingPenaltyApproachesOls) {
  Xoshiro256 rng(37);
  const Matrix x = standardized(testing::random_matrix(80, 4, rng));
  Vector y(80);
  for (std::size_t i = 0; i < 80; ++i) y[i] = x(i, 0) - x(i, 2) + 0.3 * rng.normal();
  const LinearModel ols = fit_ols(x, y);
  const LinearModel lasso = fit_lasso(x, y, 1e-10, {1e-12, 100000});
  EXPECT_LE(testing::max_abs_diff(lasso.coefficients, ols.coefficients), 1e-5);
}

TEST(Lasso, KktHoldsAcrossRandomFits) {
  Xoshiro256 rng(38);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    const std::size_t n = 10 + rng.below(80);
    const Matrix x = standardized(testing::random_matrix(n, d, rng));
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal();
      for (std::size_t j = 0; j < d; j += 2) y[i] += x(i, j) * (1.0 + j);
    }
    const double lambda = lasso_lambda_max(x, y) * (0.01 + 0.9 * rng.uniform());
    expect_kkt(x, y, fit_lasso(x, y, lambda), lambda);
  }
}

TEST(Lasso, ErrorsAndNonConvergence) {
  const Matrix x = Matrix::from_rows({{1, 1}, {-1, 1}, {1, -1}, {-1, -1}});
  const Vector y{1, 2, 3, 5};
  EXPECT_ERRC(fit_lasso(x, y, 0.0), Errc::ParamError);
  Xoshiro256 rng(39);
  const Matrix corr = testing::random_matrix(30, 6, rng);
  Matrix collinear = corr;
  for (std::size_t i = 0; i < 30; ++i) collinear(i, 1) = corr(i, 0) + 1e-3 * corr(i, 1);
  Vector yc(30);
  for (std::size_t i = 0; i < 30; ++i) yc[i] = collinear(i, 0) + collinear(i, 1);
  try {
    fit_lasso(collinear, yc, 1e-6, {1e-15, 3});
    FAIL() << "expected NoConvergence";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.code(), Errc::NoConvergence);
    EXPECT_EQ(e.iterations(), 3u);
  }
}

TEST(Predict, LinearArithmeticAndShape) {
  const LinearModel m{1.0, {2.0}, {}};
  EXPECT_EQ(predict(m, Matrix::from_rows({{3}})), Vector{7});
  EXPECT_ERRC(predict(m, Matrix::from_rows({{3, 4}})), Errc::ShapeError);
}

TEST(Predict, ForestOfIdenticalStumps) {
  ForestModel f;
  f.n_features = 2;
  TreeNode leaf;
  leaf.prediction = 5.0;
  leaf.samples = 3;
  f.trees.assign(4, RegressionTree{{leaf}});
  EXPECT_EQ(predict(f, Matrix::from_rows({{1, 2}, {-3, 0}})), (Vector{5.0, 5.0}));
}

TEST(Forest, ConstantTarget) {
  Xoshiro256 rng(40);
  const Matrix x = testing::random_matrix(30, 3, rng);
  const ForestModel f = fit_forest(x, Vector(30, 2.5), {.n_trees = 10});
  for (double p : predict(f, testing::random_matrix(5, 3, rng))) EXPECT_EQ(p, 2.5);
  for (double v : f.importances) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(f.trees.size(), 10u);
}

TEST(Forest, SingleTreeMemorizes) {
  Xoshiro256 rng(41);
  const Matrix x = testing::random_matrix(50, 3, rng);
  Vector y(50);
  for (auto& v : y) v = rng.normal();
  const ForestModel f = fit_forest(x, y, {.n_trees = 1, .bootstrap = false});
  const Vector pred = predict(f, x);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(pred[i], y[i]);
}

TEST(Forest, ImportanceConcentratesOnSignal) {
  const SyntheticData s = generate_synthetic({500, 2, {3.0, 0.0}, 0.0, 42});
  const ForestModel f = fit_forest(s.dataset.features(), s.dataset.target(), {});
  EXPECT_GT(f.importances[0], 0.9);
  EXPECT_NEAR(f.importances[0] + f.importances[1], 1.0, 1e-9);
}

TEST(Forest, PredictionsStayInTrainingRange) {
  Xoshiro256 rng(42);
  const Matrix x = testing::random_matrix(80, 4, rng);
  Vector y(80);
  for (std::size_t i = 0; i < 80; ++i) y[i] = x(i, 0) * x(i, 1) + rng.normal();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const ForestModel f = fit_forest(x, y, {.n_trees = 20, .min_samples_leaf = 3});
  for (double p : predict(f, testing::random_matrix(200, 4, rng) )) {
    EXPECT_GE(p, *lo);
    EXPECT_LE(p, *hi);
  }
}

TEST(Forest, DeterministicAndThreadIndependent) {
  Xoshiro256 rng(43);
  const Matrix x = testing::random_matrix(120, 5, rng);
  Vector y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = std::sin(x(i, 0)) + x(i, 3) + 0.1 * rng.normal();
  const ForestParams serial{.n_trees = 16, .seed = 9};
  ForestParams parallel = serial;
  parallel.threads = 4;
  const ForestModel a = fit_forest(x, y, serial), b = fit_forest(x, y, serial),
                    c = fit_forest(x, y, parallel);
  const Matrix probe = testing::random_matrix(30, 5, rng);
  EXPECT_EQ(predict(a, probe), predict(b, probe));
  EXPECT_EQ(predict(a, probe), predict(c, probe));
  EXPECT_EQ(a.importances, c.importances);
  ForestParams reseeded = serial;
  reseeded.seed = 10;
  EXPECT_NE(predict(a, probe), predict(fit_forest(x, y, reseeded), probe));
}

TEST(Forest, ImportancesSumToOneAndNodesAreConsistent) {
  Xoshiro256 rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const Matrix x = testing::random_matrix(40 + rng.below(60), d, rng);
    Vector y(x.rows());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x(i, 0) + rng.normal();
    const ForestModel f =
        fit_forest(x, y, {.n_trees = 5, .max_depth = 1 + rng.below(6), .seed = rng()});
    EXPECT_NEAR(std::accumulate(f.importances.begin(), f.importances.end(), 0.0), 1.0, 1e-9);
    for (double v : f.importances) EXPECT_GE(v, 0.0);
    for (const auto& tree : f.trees)
      for (const auto& node : tree.nodes) {
        EXPECT_GE(node.impurity_decrease, 0.0);
        if (!node.is_leaf()) {
          EXPECT_EQ(tree.nodes[node.left].samples + tree.nodes[node.right].samples, node.samples);
        }
      }
  }
}

TEST(Forest, ParameterErrors) {
  const Matrix x = Matrix::from_rows({{1}, {2}, {3}});
  const Vector y{1, 2, 3};
  EXPECT_ERRC(fit_forest(x, y, {.n_trees = 0}), Errc::ParamError);
  EXPECT_ERRC(fit_forest(x, y, {.min_samples_leaf = 0}), Errc::ParamError);
  EXPECT_ERRC(fit_forest(Matrix::from_rows({{1}}), Vector{1}, {}), Errc::InsufficientRows);
  EXPECT_ERRC(predict(fit_forest(x, y, {.n_trees = 2}), Matrix::from_rows({{1, 2}})),
              Errc::ShapeError);
}

TEST(Forest, DepthAndLeafSizeLimits) {
  Xoshiro256 rng(45);
  const Matrix x = testing::random_matrix(100, 3, rng);
  Vector y(100);
  for (auto& v : y) v = rng.normal();
  const ForestModel stump = fit_forest(x, y, {.n_trees = 3, .max_depth = 1});
  for (const auto& tree : stump.trees) EXPECT_LE(tree.nodes.size(), 3u);
  const ForestModel leafy = fit_forest(x, y, {.n_trees = 3, .min_samples_leaf = 10});
  for (const auto& tree : leafy.trees)
    for (const auto& node : tree.nodes)
      if (node.is_leaf()) {
        EXPECT_GE(node.samples, 10u);
      }
}

}  // namespace
}  // namespace fsbench
