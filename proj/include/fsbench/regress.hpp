#pragma once

// Ordinary least squares, ridge, lasso (cyclic coordinate descent), and a CART
// random forest with impurity importances.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "fsbench/error.hpp"
#include "fsbench/linalg.hpp"
#include "fsbench/random.hpp"

namespace fsbench {

enum class PenaltyKind { None, L2, L1 };

struct Penalty {
  PenaltyKind kind = PenaltyKind::None;
  double lambda = 0.0;
};

struct LinearModel {
  double intercept = 0.0;
  Vector coefficients;
  Penalty penalty;
};

namespace detail {

inline Matrix with_intercept_column(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out(i, 0) = 1.0;
    std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin() + 1);
  }
  return out;
}

inline void check_fit_inputs(const Matrix& x, std::span<const double> y) {
  require(x.rows() == y.size(), Errc::ShapeError,
          "X has " + std::to_string(x.rows()) + " rows but y has " + std::to_string(y.size()));
}

struct Centered {
  Matrix x;
  Vector y;
  Vector x_means;
  double y_mean = 0.0;
};

inline Centered center(const Matrix& x, std::span<const double> y) {
  Centered c{x, Vector(y.begin(), y.end()), column_means(x), 0.0};
  c.y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) c.x(i, j) -= c.x_means[j];
    c.y[i] -= c.y_mean;
  }
  return c;
}

}  // namespace detail

/// beta = argmin ||y - b0 - X beta||^2, solved by QR on the intercept-augmented matrix.
inline LinearModel fit_ols(const Matrix& x, std::span<const double> y) {
  detail::check_fit_inputs(x, y);
  const Vector beta = lstsq(detail::with_intercept_column(x), y);
  return {beta[0], Vector(beta.begin() + 1, beta.end()), {PenaltyKind::None, 0.0}};
}

/// Solves (X^T X + penalty * I) beta = X^T y with no intercept, as least squares on
/// X stacked over sqrt(penalty) * I.
inline Vector ridge_solve(const Matrix& x, std::span<const double> y, double penalty) {
  require(penalty >= 0.0, Errc::ParamError, "ridge penalty must be non-negative");
  if (penalty == 0.0) return lstsq(x, y);
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  Matrix augmented(n + p, p);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.row(i).begin(), x.row(i).end(), augmented.row(i).begin());
  const double root = std::sqrt(penalty);
  for (std::size_t j = 0; j < p; ++j) augmented(n + j, j) = root;
  Vector rhs(y.begin(), y.end());
  rhs.resize(n + p, 0.0);
  return lstsq(augmented, rhs);
}

/// Ridge on centered data: beta = (Xc^T Xc + n*lambda*I)^-1 Xc^T yc; the intercept is
/// not penalized.
inline LinearModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda) {
  detail::check_fit_inputs(x, y);
  require(lambda >= 0.0 && std::isfinite(lambda), Errc::ParamError,
          "ridge lambda must be non-negative");
  const auto c = detail::center(x, y);
  LinearModel model{0.0, ridge_solve(c.x, c.y, static_cast<double>(x.rows()) * lambda),
                    {PenaltyKind::L2, lambda}};
  model.intercept = c.y_mean - dot(c.x_means, model.coefficients);
  return model;
}

inline double soft_threshold(double z, double gamma) noexcept {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Smallest lambda for which the lasso solution is identically zero:
/// max_j |(1/n) X_j^T (y - mean(y))| on centered columns.
inline double lasso_lambda_max(const Matrix& x, std::span<const double> y) {
  detail::check_fit_inputs(x, y);
  const auto c = detail::center(x, y);
  // Same arithmetic as the first coordinate-descent update, so that fitting at exactly
  // lambda_max thresholds every coefficient to zero.
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  double best = 0.0;
  for (std::size_t j = 0; j < x.cols(); ++j)
    best = std::max(best, std::abs(dot(c.x.column(j), c.y) * inv_n));
  return best;
}

struct LassoOptions {
  double tol = 1e-8;
  std::size_t max_iter = 10000;
};

/// Minimizes (1/2n)||y - b0 - X beta||^2 + lambda * ||beta||_1 by cyclic coordinate
/// descent with soft-thresholding. Stops when the largest coefficient change in a
/// sweep is below tol.
inline LinearModel fit_lasso(const Matrix& x, std::span<const double> y, double lambda,
                             const LassoOptions& opts = {}) {
  detail::check_fit_inputs(x, y);
  require(lambda > 0.0 && std::isfinite(lambda), Errc::ParamError, "lasso lambda must be positive");
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto c = detail::center(x, y);

  std::vector<Vector> cols(p);
  Vector curvature(p);
  for (std::size_t j = 0; j < p; ++j) {
    cols[j] = c.x.column(j);
    curvature[j] = dot(cols[j], cols[j]) * inv_n;
  }

  Vector beta(p, 0.0);
  Vector residual = c.y;
  std::size_t sweep = 0;
  for (;;) {
    if (sweep == opts.max_iter) throw ConvergenceError("lasso coordinate descent", sweep);
    ++sweep;
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (curvature[j] == 0.0) continue;
      const double old = beta[j];
      const double z = dot(cols[j], residual) * inv_n + curvature[j] * old;
      const double updated = soft_threshold(z, lambda) / curvature[j];
      if (updated == old) continue;
      const double delta = updated - old;
      for (std::size_t i = 0; i < n; ++i) residual[i] -= cols[j][i] * delta;
      beta[j] = updated;
      max_change = std::max(max_change, std::abs(delta));
    }
    if (max_change < opts.tol) break;
  }
  LinearModel model{0.0, std::move(beta), {PenaltyKind::L1, lambda}};
  model.intercept = c.y_mean - dot(c.x_means, model.coefficients);
  return model;
}

inline Vector predict(const LinearModel& model, const Matrix& x) {
  require(x.cols() == model.coefficients.size(), Errc::ShapeError,
          "linear model expects " + std::to_string(model.coefficients.size()) + " columns, got " +
              std::to_string(x.cols()));
  Vector out = matvec(x, model.coefficients);
  for (auto& v : out) v += model.intercept;
  return out;
}

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;           // 0 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = max(1, floor(d / 3))
  bool bootstrap = true;
  std::uint64_t seed = 42;
  std::size_t threads = 1;             // 0 = hardware concurrency

  std::size_t resolved_features(std::size_t d) const noexcept {
    const std::size_t k = features_per_split == 0 ? std::max<std::size_t>(1, d / 3)
                                                  : features_per_split;
    return std::min(k, d);
  }
};

/// Flat CART node. Leaves have feature == kLeaf.
struct TreeNode {
  static constexpr std::size_t kLeaf = std::numeric_limits<std::size_t>::max();

  std::size_t feature = kLeaf;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  double prediction = 0.0;        // mean training target reaching this node
  std::size_t samples = 0;
  double impurity_decrease = 0.0; // SSE(node) - SSE(left) - SSE(right), >= 0

  bool is_leaf() const noexcept { return feature == kLeaf; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(std::span<const double> row) const noexcept {
    std::size_t at = 0;
    while (!nodes[at].is_leaf())
      at = row[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
    return nodes[at].prediction;
  }
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  Vector importances;  // sums to 1, or all zero when no split happened
  ForestParams params;
  std::size_t n_features = 0;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, const ForestParams& params,
              Xoshiro256& rng)
      : x_(x), y_(y), params_(params), rng_(rng), mtry_(params.resolved_features(x.cols())) {}

  RegressionTree build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    tree_.nodes.clear();
    grow(0, samples_.size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::size_t feature = TreeNode::kLeaf;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();
  };

  std::size_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t m = end - begin;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[samples_[i]];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.push_back({});
    tree_.nodes[id].samples = m;
    tree_.nodes[id].prediction = sum / static_cast<double>(m);

    const bool depth_exhausted = params_.max_depth != 0 && depth >= params_.max_depth;
    if (depth_exhausted || lo == hi || m < 2 * params_.min_samples_leaf) return id;

    const Split split = best_split(begin, end, sum);
    if (split.feature == TreeNode::kLeaf) return id;

    const auto mid_it = std::stable_partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(begin),
        samples_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t s) { return x_(s, split.feature) <= split.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());

    // Impurities are recomputed from each side's own mean to avoid the cancellation in
    // sumsq - sum^2 / m.
    const double node_sse = sse(begin, end);
    const double child_sse = sse(begin, mid) + sse(mid, end);
    const std::size_t left = grow(begin, mid, depth + 1);
    const std::size_t right = grow(mid, end, depth + 1);

    TreeNode& node = tree_.nodes[id];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    node.impurity_decrease = std::max(0.0, node_sse - child_sse);
    return id;
  }

  double sse(std::size_t begin, std::size_t end) const {
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += y_[samples_[i]];
    mean /= static_cast<double>(end - begin);
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += std::pow(y_[samples_[i]] - mean, 2);
    return acc;
  }

  Split best_split(std::size_t begin, std::size_t end, double total) {
    const std::size_t d = x_.cols();
    const std::size_t m = end - begin;
    std::vector<std::size_t> features = all_features(d);
    Split best;
    // Scan a random subset of mtry features; if none of them admits a valid split,
    // keep drawing from the remainder until one does.
    for (std::size_t drawn = 0; drawn < d; ++drawn) {
      const std::size_t pick = drawn + rng_.below(d - drawn);
      std::swap(features[drawn], features[pick]);
      if (drawn >= mtry_ && best.feature != TreeNode::kLeaf) break;
      const std::size_t f = features[drawn];

      scratch_.clear();
      for (std::size_t i = begin; i < end; ++i)
        scratch_.emplace_back(x_(samples_[i], f), y_[samples_[i]]);
      std::sort(scratch_.begin(), scratch_.end());

      double left_sum = 0.0;
      const std::size_t min_leaf = params_.min_samples_leaf;
      for (std::size_t i = 1; i < m; ++i) {
        left_sum += scratch_[i - 1].second;
        if (i < min_leaf || m - i < min_leaf) continue;
        if (!(scratch_[i - 1].first < scratch_[i].first)) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(i) +
                             right_sum * right_sum / static_cast<double>(m - i);
        if (score > best.score) {
          double threshold = 0.5 * (scratch_[i - 1].first + scratch_[i].first);
          if (!(threshold < scratch_[i].first)) threshold = scratch_[i - 1].first;
          best = {f, threshold, score};
        }
      }
    }
    return best;
  }

  static std::vector<std::size_t> all_features(std::size_t d) {
    std::vector<std::size_t> f(d);
    std::iota(f.begin(), f.end(), std::size_t{0});
    return f;
  }

  const Matrix& x_;
  std::span<const double> y_;
  const ForestParams& params_;
  Xoshiro256& rng_;
  std::size_t mtry_;
  std::vector<std::size_t> samples_;
  std::vector<std::pair<double, double>> scratch_;
  RegressionTree tree_;
};

inline RegressionTree fit_tree(const Matrix& x, std::span<const double> y,
                               const ForestParams& params, std::size_t tree_index) {
  Xoshiro256 rng = Xoshiro256::stream(params.seed, tree_index);
  const std::size_t n = x.rows();
  std::vector<std::size_t> samples(n);
  if (params.bootstrap)
    for (auto& s : samples) s = rng.below(n);
  else
    std::iota(samples.begin(), samples.end(), std::size_t{0});
  TreeBuilder builder(x, y, params, rng);
  return builder.build(std::move(samples));
}

}  // namespace detail

/// Bagged CART regression forest. Tree t draws from the stream (seed, t), so the
/// fitted model does not depend on how many threads trained it.
inline ForestModel fit_forest(const Matrix& x, std::span<const double> y,
                              const ForestParams& params = {}) {
  detail::check_fit_inputs(x, y);
  require(x.rows() >= 2, Errc::InsufficientRows, "forest needs at least 2 rows");
  require(params.n_trees >= 1, Errc::ParamError, "n_trees must be at least 1");
  require(params.min_samples_leaf >= 1, Errc::ParamError, "min_samples_leaf must be at least 1");

  ForestModel model{std::vector<RegressionTree>(params.n_trees), Vector(x.cols(), 0.0), params,
                    x.cols()};
  std::size_t workers = params.threads == 0 ? std::thread::hardware_concurrency() : params.threads;
  workers = std::clamp<std::size_t>(workers, 1, params.n_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) model.trees[t] = detail::fit_tree(x, y, params, t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next.fetch_add(1)) < params.n_trees;)
          model.trees[t] = detail::fit_tree(x, y, params, t);
      });
  }

  for (const auto& tree : model.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) model.importances[node.feature] += node.impurity_decrease;
  const double total = std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  if (total > 0.0)
    for (auto& v : model.importances) v /= total;
  return model;
}

inline Vector predict(const ForestModel& model, const Matrix& x) {
  require(x.cols() == model.n_features, Errc::ShapeError,
          "forest expects " + std::to_string(model.n_features) + " columns, got " +
              std::to_string(x.cols()));
  Vector out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    double acc = 0.0;
    for (const auto& tree : model.trees) acc += tree.predict_row(row);
    out[i] = acc / static_cast<double>(model.trees.size());
  }
  return out;
}

using RegressorModel = std::variant<LinearModel, ForestModel>;

inline Vector predict(const RegressorModel& model, const Matrix& x) {
  return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

}  // namespace fsbench
