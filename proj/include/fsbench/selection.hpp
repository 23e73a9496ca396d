#pragma once

// Filter scorers (F statistic, mutual information, chi-squared), SelectKBest, PCA,
// recursive feature elimination, and ensemble combination of fitted selectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fsbench/data.hpp"
#include "fsbench/error.hpp"
#include "fsbench/linalg.hpp"

namespace fsbench {

enum class ScoreMethod { FRegression, MutualInfo, ChiSquared, LassoMagnitude, ForestImportance };

inline std::string_view to_string(ScoreMethod m) noexcept {
  switch (m) {
    case ScoreMethod::FRegression: return "f_regression";
    case ScoreMethod::MutualInfo: return "mutual_info";
    case ScoreMethod::ChiSquared: return "chi2";
    case ScoreMethod::LassoMagnitude: return "lasso";
    case ScoreMethod::ForestImportance: return "forest";
  }
  return "unknown";
}

struct FeatureScores {
  Vector scores;
  ScoreMethod method = ScoreMethod::FRegression;
};

namespace detail {

inline bool is_constant(std::span<const double> v) {
  if (v.empty()) return true;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo == *hi;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace detail

/// Univariate F statistic per feature: F = r^2 / (1 - r^2) * (n - 2), where r is the
/// Pearson correlation of the feature with the target. Constant features score 0.
/// A perfectly correlated feature gets the finite value (n - 2) * 1e15.
inline FeatureScores f_regression_scores(const Dataset& ds) {
  require(ds.n() >= 3, Errc::InsufficientRows, "f_regression needs at least 3 rows");
  require(!detail::is_constant(ds.target()), Errc::DegenerateTarget, "target is constant");
  FeatureScores out{Vector(ds.d(), 0.0), ScoreMethod::FRegression};
  const double dof = static_cast<double>(ds.n() - 2);
  for (std::size_t j = 0; j < ds.d(); ++j) {
    const Vector x = ds.features().column(j);
    if (detail::is_constant(x)) continue;
    const double r2 = std::pow(detail::pearson(x, ds.target()), 2);
    out.scores[j] = r2 / std::max(1.0 - r2, 1e-15) * dof;
  }
  return out;
}

/// Equal-frequency discretization. Tied values always share a bin, so some of the
/// requested bins can vanish; labels are compacted to 0..(distinct bins - 1).
inline std::vector<std::size_t> equal_frequency_bins(std::span<const double> values,
                                                     std::size_t bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> labels(n);
  std::size_t label = 0;
  std::size_t previous_bin = 0;
  for (std::size_t pos = 0; pos < n;) {
    std::size_t end = pos;
    while (end < n && values[order[end]] == values[order[pos]]) ++end;
    // A tie group lands in the bin containing its centre rank.
    const auto bin = std::min(bins - 1, (pos + end) * bins / (2 * n));
    if (pos > 0 && bin != previous_bin) ++label;
    previous_bin = bin;
    for (std::size_t i = pos; i < end; ++i) labels[order[i]] = label;
    pos = end;
  }
  return labels;
}

inline std::size_t label_count(std::span<const std::size_t> labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

/// Shannon entropy (nats) of a discrete labelling.
inline double entropy(std::span<const std::size_t> labels) {
  std::vector<std::size_t> counts(label_count(labels), 0);
  for (auto l : labels) ++counts[l];
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (auto c : counts)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}

/// I(X;Y) = H(X) + H(Y) - H(X,Y) on discrete labels, clamped at zero.
inline double mutual_information(std::span<const std::size_t> x, std::span<const std::size_t> y) {
  require(x.size() == y.size(), Errc::ShapeError, "label vectors differ in length");
  const std::size_t ny = label_count(y);
  std::vector<std::size_t> joint(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) joint[i] = x[i] * ny + y[i];
  // Joint codes are sparse; entropy() only needs counts, so remap them densely.
  std::map<std::size_t, std::size_t> dense;
  for (auto& code : joint) code = dense.emplace(code, dense.size()).first->second;
  return std::max(0.0, entropy(x) + entropy(y) - entropy(joint));
}

struct MiEstimatorConfig {
  std::size_t bins = 0;  // 0 selects min(10, floor(sqrt(n)))

  std::size_t resolve(std::size_t n) const {
    if (bins != 0) return bins;
    const auto root = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    return std::max<std::size_t>(2, std::min<std::size_t>(10, root));
  }
};

/// Mutual information of each feature with the target, both discretized into
/// equal-frequency bins.
inline FeatureScores mutual_info_scores(const Dataset& ds, const MiEstimatorConfig& cfg = {}) {
  const std::size_t bins = cfg.resolve(ds.n());
  require(bins >= 2, Errc::ParamError, "mutual information needs at least 2 bins");
  require(ds.n() >= 2 * bins, Errc::InsufficientSamples,
          std::to_string(ds.n()) + " rows cannot fill " + std::to_string(bins) + " bins");
  const auto y_labels = equal_frequency_bins(ds.target(), bins);
  FeatureScores out{Vector(ds.d(), 0.0), ScoreMethod::MutualInfo};
  for (std::size_t j = 0; j < ds.d(); ++j) {
    const Vector x = ds.features().column(j);
    out.scores[j] = mutual_information(equal_frequency_bins(x, bins), y_labels);
  }
  return out;
}

/// Sum over cells of (O - E)^2 / E. Cells with E == 0 contribute nothing.
inline double chi_squared_statistic(std::span<const double> observed,
                                    std::span<const double> expected) {
  require(observed.size() == expected.size(), Errc::ShapeError, "observed/expected mismatch");
  double chi2 = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    if (expected[i] > 0.0) chi2 += std::pow(observed[i] - expected[i], 2) / expected[i];
  return chi2;
}

/// Chi-squared independence statistic of a contingency table built from two labellings.
inline double contingency_chi_squared(std::span<const std::size_t> rows,
                                      std::span<const std::size_t> cols) {
  const std::size_t r = label_count(rows);
  const std::size_t c = label_count(cols);
  std::vector<double> observed(r * c, 0.0), row_total(r, 0.0), col_total(c, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    observed[rows[i] * c + cols[i]] += 1.0;
    row_total[rows[i]] += 1.0;
    col_total[cols[i]] += 1.0;
  }
  const double n = static_cast<double>(rows.size());
  std::vector<double> expected(r * c);
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t b = 0; b < c; ++b) expected[a * c + b] = row_total[a] * col_total[b] / n;
  return chi_squared_statistic(observed, expected);
}

namespace detail {

/// Discrete classes for the target: its own levels when they are integral or few,
/// otherwise equal-frequency bins.
inline std::vector<std::size_t> target_classes(std::span<const double> y, std::size_t bins) {
  std::vector<double> levels(y.begin(), y.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const bool integral = std::all_of(levels.begin(), levels.end(),
                                    [](double v) { return v == std::floor(v); });
  if (!integral && levels.size() > bins) return equal_frequency_bins(y, bins);
  std::vector<std::size_t> labels(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    labels[i] = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), y[i]) -
                                         levels.begin());
  return labels;
}

}  // namespace detail

inline FeatureScores chi_squared_scores(const Dataset& ds, std::size_t target_bins = 5,
                                        std::size_t feature_bins = 5) {
  require(target_bins >= 2 && feature_bins >= 2, Errc::ParamError,
          "chi-squared needs at least 2 bins per axis");
  require(!detail::is_constant(ds.target()), Errc::DegenerateTarget,
          "target has fewer than 2 distinct values");
  const auto classes = detail::target_classes(ds.target(), target_bins);
  FeatureScores out{Vector(ds.d(), 0.0), ScoreMethod::ChiSquared};
  for (std::size_t j = 0; j < ds.d(); ++j) {
    const Vector x = ds.features().column(j);
    out.scores[j] = contingency_chi_squared(equal_frequency_bins(x, feature_bins), classes);
  }
  return out;
}

enum class SelectorKind { KBest, Rfe, Pca, Ensemble };

/// Fitted principal-component projection.
struct PcaProjection {
  Vector means;                // per input column
  Matrix components;           // input_dim x k, orthonormal columns
  Vector eigenvalues;          // all input_dim eigenvalues, non-increasing
  Vector variance_explained;   // percent, one per kept component

  Matrix transform(const Matrix& x) const {
    require(x.cols() == means.size(), Errc::ShapeError, "PCA input width mismatch");
    Matrix centered = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) centered(i, j) -= means[j];
    return matmul(centered, components);
  }

  Matrix inverse_transform(const Matrix& z) const {
    Matrix x = matmul(z, components.transpose());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += means[j];
    return x;
  }
};

/// A fitted feature-selection transform: a column subset of the input, optionally
/// followed by a PCA projection of that subset.
struct SelectorModel {
  SelectorKind kind = SelectorKind::KBest;
  std::size_t input_dim = 0;
  std::vector<std::size_t> kept_indices;  // strictly increasing, into the input columns
  std::vector<std::size_t> ranking;       // per input column, 0 = strongest
  std::optional<PcaProjection> pca;

  std::size_t output_dim() const noexcept {
    return pca ? pca->components.cols() : kept_indices.size();
  }

  bool index_based() const noexcept { return !pca.has_value(); }
};

inline std::vector<std::size_t> all_indices(std::size_t d) {
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Keeps every column unchanged.
inline SelectorModel identity_selector(std::size_t d) {
  return {SelectorKind::KBest, d, all_indices(d), std::vector<std::size_t>(d, 0), std::nullopt};
}

inline Matrix selector_transform(const SelectorModel& model, const Matrix& x) {
  require(x.cols() == model.input_dim, Errc::ShapeError,
          "selector fitted on " + std::to_string(model.input_dim) + " columns, got " +
              std::to_string(x.cols()));
  Matrix subset = select_columns(x, model.kept_indices);
  return model.pca ? model.pca->transform(subset) : subset;
}

/// Keeps the k highest-scoring features; ties go to the lower index.
inline SelectorModel select_k_best(const FeatureScores& scores, std::size_t k) {
  const std::size_t d = scores.scores.size();
  require(k >= 1 && k <= d, Errc::ParamError,
          "k=" + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
  auto order = all_indices(d);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.scores[a] > scores.scores[b];
  });
  SelectorModel model{SelectorKind::KBest, d, {}, std::vector<std::size_t>(d), std::nullopt};
  for (std::size_t r = 0; r < d; ++r) model.ranking[order[r]] = r;
  model.kept_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(model.kept_indices.begin(), model.kept_indices.end());
  return model;
}

/// Centers the columns, eigendecomposes the 1/n covariance, and keeps the top-k
/// eigenvectors.
inline PcaProjection fit_pca_projection(const Matrix& x, std::size_t k) {
  require(k >= 1 && k <= x.cols(), Errc::ParamError,
          "PCA k=" + std::to_string(k) + " outside [1, " + std::to_string(x.cols()) + "]");
  const Matrix cov = covariance(x);
  const EigenResult eig = eig_symmetric(cov);
  PcaProjection p{column_means(x), Matrix(x.cols(), k), eig.eigenvalues, Vector(k, 0.0)};
  const double total = std::accumulate(eig.eigenvalues.begin(), eig.eigenvalues.end(), 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < x.cols(); ++r) p.components(r, c) = eig.eigenvectors(r, c);
    p.variance_explained[c] = total > 0.0 ? eig.eigenvalues[c] / total * 100.0 : 0.0;
  }
  return p;
}

inline SelectorModel pca_fit(const Dataset& ds, std::size_t k) {
  const std::size_t d = ds.d();
  return {SelectorKind::Pca, d, all_indices(d), std::vector<std::size_t>(d, 0),
          fit_pca_projection(ds.features(), k)};
}

/// Trains on the first matrix/target and predicts the rows of the second matrix.
using FitPredict =
    std::function<Vector(const Matrix& train_x, std::span<const double> train_y,
                         const Matrix& eval_x)>;

namespace detail {

inline double rmse(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

}  // namespace detail

/// Recursive feature elimination. Each round scores every remaining feature i by the
/// inner-CV RMSE of the estimator trained without i, and drops the feature whose
/// removal gives the lowest RMSE (ties drop the higher index). One feature per round.
inline SelectorModel rfe_fit(const Dataset& ds, std::size_t n_select, const FitPredict& estimator,
                             std::size_t inner_folds = 3, std::uint64_t seed = 42) {
  const std::size_t d = ds.d();
  require(n_select >= 1 && n_select < d, Errc::ParamError,
          "RFE n_select=" + std::to_string(n_select) + " must lie in [1, " +
              std::to_string(d - 1) + "]");
  require(inner_folds >= 2, Errc::ParamError, "RFE needs at least 2 inner folds");
  const FoldPlan plan = kfold(ds.n(), inner_folds, seed);
  std::vector<std::vector<std::size_t>> train_rows, test_rows;
  for (std::size_t f = 0; f < inner_folds; ++f) {
    train_rows.push_back(plan.train_rows(f));
    test_rows.push_back(plan.test_rows(f));
  }

  auto score_without = [&](const std::vector<std::size_t>& columns) {
    const Matrix x = select_columns(ds.features(), columns);
    double total = 0.0;
    for (std::size_t f = 0; f < inner_folds; ++f) {
      Vector y_train(train_rows[f].size()), y_test(test_rows[f].size());
      for (std::size_t i = 0; i < y_train.size(); ++i) y_train[i] = ds.target()[train_rows[f][i]];
      for (std::size_t i = 0; i < y_test.size(); ++i) y_test[i] = ds.target()[test_rows[f][i]];
      const Vector pred =
          estimator(select_rows(x, train_rows[f]), y_train, select_rows(x, test_rows[f]));
      total += detail::rmse(y_test, pred);
    }
    return total / static_cast<double>(inner_folds);
  };

  SelectorModel model{SelectorKind::Rfe, d, all_indices(d), std::vector<std::size_t>(d, 0),
                      std::nullopt};
  std::size_t rounds = d - n_select;
  while (model.kept_indices.size() > n_select) {
    std::size_t drop = 0;
    double best = 0.0;
    for (std::size_t pos = 0; pos < model.kept_indices.size(); ++pos) {
      std::vector<std::size_t> reduced = model.kept_indices;
      reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(pos));
      const double score = score_without(reduced);
      if (pos == 0 || score <= best) {
        best = score;
        drop = pos;
      }
    }
    model.ranking[model.kept_indices[drop]] = rounds--;
    model.kept_indices.erase(model.kept_indices.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return model;
}

enum class EnsembleStrategy { Chain, MajorityVote };

/// Combines fitted selectors.
///
/// Chain composes them left to right: each member must have been fitted on the
/// previous member's output, and only the last member may carry a PCA projection.
/// MajorityVote keeps features chosen by at least ceil(m/2) of the m members (all
/// fitted on the same columns), ordered by vote count then mean rank, truncated to k.
inline SelectorModel ensemble_combine(const std::vector<SelectorModel>& members,
                                      EnsembleStrategy strategy, std::size_t k) {
  require(!members.empty(), Errc::ParamError, "ensemble needs at least one selector");
  if (members.size() == 1) return members.front();

  const std::size_t d = members.front().input_dim;
  if (strategy == EnsembleStrategy::Chain) {
    SelectorModel out{SelectorKind::Ensemble, d, members.front().kept_indices,
                      std::vector<std::size_t>(d, 0), members.front().pca};
    const std::size_t stages = members.size();
    auto mark_dropped = [&](const std::vector<std::size_t>& before, std::size_t stage) {
      for (auto j : before)
        if (!std::binary_search(out.kept_indices.begin(), out.kept_indices.end(), j))
          out.ranking[j] = stages - stage;
    };
    mark_dropped(all_indices(d), 0);
    for (std::size_t s = 1; s < stages; ++s) {
      const SelectorModel& m = members[s];
      require(members[s - 1].index_based(), Errc::StrategyError,
              "PCA may only appear as the last member of a chain");
      require(m.input_dim == out.kept_indices.size(), Errc::StrategyError,
              "chain member " + std::to_string(s) + " expects " + std::to_string(m.input_dim) +
                  " columns but receives " + std::to_string(out.kept_indices.size()));
      const std::vector<std::size_t> before = out.kept_indices;
      std::vector<std::size_t> composed;
      for (auto j : m.kept_indices) composed.push_back(before[j]);
      out.kept_indices = std::move(composed);
      out.pca = m.pca;
      mark_dropped(before, s);
    }
    return out;
  }

  for (const auto& m : members) {
    require(m.index_based(), Errc::StrategyError,
            "PCA has no per-feature vote and cannot join a majority vote");
    require(m.input_dim == d, Errc::StrategyError, "majority vote members differ in input width");
  }
  require(k >= 1, Errc::ParamError, "majority vote k must be at least 1");
  const std::size_t m = members.size();
  const std::size_t quorum = (m + 1) / 2;
  std::vector<std::size_t> votes(d, 0);
  std::vector<double> mean_rank(d, 0.0);
  for (const auto& member : members) {
    for (auto j : member.kept_indices) ++votes[j];
    for (std::size_t j = 0; j < d; ++j) {
      const bool kept =
          std::binary_search(member.kept_indices.begin(), member.kept_indices.end(), j);
      // Members built without a ranking fall back to kept=0, dropped=1.
      const double rank = member.ranking.size() == d ? static_cast<double>(member.ranking[j])
                                                     : (kept ? 0.0 : 1.0);
      mean_rank[j] += rank / static_cast<double>(m);
    }
  }
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < d; ++j)
    if (votes[j] >= quorum) candidates.push_back(j);
  require(!candidates.empty(), Errc::StrategyError,
          "no feature was chosen by " + std::to_string(quorum) + " of " + std::to_string(m) +
              " members");
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    return mean_rank[a] < mean_rank[b];
  });
  SelectorModel out{SelectorKind::Ensemble, d, {}, std::vector<std::size_t>(d, d), std::nullopt};
  for (std::size_t r = 0; r < candidates.size(); ++r) out.ranking[candidates[r]] = r;
  candidates.resize(std::min(candidates.size(), k));
  out.kept_indices = std::move(candidates);
  std::sort(out.kept_indices.begin(), out.kept_indices.end());
  return out;
}

}  // namespace fsbench
