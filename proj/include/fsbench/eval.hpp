#pragma once

// Metrics, the leakage-safe selector + regressor pipeline, and k-fold cross-validation.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fsbench/data.hpp"
#include "fsbench/error.hpp"
#include "fsbench/linalg.hpp"
#include "fsbench/regress.hpp"
#include "fsbench/selection.hpp"

namespace fsbench {

inline double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  require(!y_true.empty() && y_true.size() == y_pred.size(), Errc::ShapeError,
          "mse needs equal nonzero lengths, got " + std::to_string(y_true.size()) + " and " +
              std::to_string(y_pred.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) acc += std::pow(y_true[i] - y_pred[i], 2);
  return acc / static_cast<double>(y_true.size());
}

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  return std::sqrt(mse(y_true, y_pred));
}

inline double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
  require(!y_true.empty() && y_true.size() == y_pred.size(), Errc::ShapeError,
          "r_squared needs equal nonzero lengths");
  require(!detail::is_constant(y_true), Errc::DegenerateTarget, "constant y_true");
  const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) /
                      static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += std::pow(y_true[i] - y_pred[i], 2);
    ss_tot += std::pow(y_true[i] - mean, 2);
  }
  return 1.0 - ss_res / ss_tot;
}

struct MetricReport {
  double mse = 0.0;
  double rmse = 0.0;
  double r_squared = 0.0;
};

inline MetricReport evaluate(std::span<const double> y_true, std::span<const double> y_pred) {
  const double m = mse(y_true, y_pred);
  return {m, std::sqrt(m), r_squared(y_true, y_pred)};
}

enum class RegressorKind { Linear, Ridge, Lasso, Forest, Mean };

struct RegressorSpec {
  RegressorKind kind = RegressorKind::Linear;
  std::string label;
  double lambda = 0.0;  // ridge default 1.0, lasso default 0.1 (see make_regressor)
  LassoOptions lasso;
  ForestParams forest;

  std::string display_label() const {
    if (!label.empty()) return label;
    switch (kind) {
      case RegressorKind::Linear: return "LinearRegression";
      case RegressorKind::Ridge: return "Ridge";
      case RegressorKind::Lasso: return "Lasso";
      case RegressorKind::Forest: return "RandomForestRegressor";
      case RegressorKind::Mean: return "MeanBaseline";
    }
    return "Regressor";
  }
};

inline RegressorSpec make_regressor(RegressorKind kind) {
  RegressorSpec spec;
  spec.kind = kind;
  if (kind == RegressorKind::Ridge) spec.lambda = 1.0;
  if (kind == RegressorKind::Lasso) spec.lambda = 0.1;
  return spec;
}

inline RegressorModel fit_regressor(const RegressorSpec& spec, const Matrix& x,
                                    std::span<const double> y) {
  switch (spec.kind) {
    case RegressorKind::Linear: return fit_ols(x, y);
    case RegressorKind::Ridge: return fit_ridge(x, y, spec.lambda);
    case RegressorKind::Lasso: return fit_lasso(x, y, spec.lambda, spec.lasso);
    case RegressorKind::Forest: return fit_forest(x, y, spec.forest);
    case RegressorKind::Mean: {
      require(x.rows() == y.size() && !y.empty(), Errc::ShapeError, "mean baseline shape");
      const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      return LinearModel{mean, Vector(x.cols(), 0.0), {}};
    }
  }
  fail(Errc::ParamError, "unknown regressor kind");
}

inline FitPredict make_fit_predict(RegressorSpec spec) {
  return [spec = std::move(spec)](const Matrix& x, std::span<const double> y, const Matrix& eval) {
    return predict(fit_regressor(spec, x, y), eval);
  };
}

enum class TechniqueKind { KBest, Rfe, Pca };

/// One selection step. Unset counts default to ceil(d / 2) of the columns it sees.
struct TechniqueSpec {
  TechniqueKind kind = TechniqueKind::KBest;
  ScoreMethod score = ScoreMethod::FRegression;
  std::optional<std::size_t> k;  // KBest k, RFE n_select, PCA components
  MiEstimatorConfig mi;
  std::size_t chi2_target_bins = 5;
  std::size_t chi2_feature_bins = 5;
  double lasso_lambda = 0.1;
  ForestParams forest;
  std::size_t inner_folds = 3;
  RegressorSpec estimator;  // RFE estimator
};

struct SelectorSpec {
  std::string label;
  std::vector<TechniqueSpec> techniques;  // empty keeps every column
  EnsembleStrategy strategy = EnsembleStrategy::Chain;
  std::optional<std::size_t> vote_k;
};

inline std::size_t half_up(std::size_t d) { return (d + 1) / 2; }

inline FeatureScores compute_scores(const Dataset& ds, const TechniqueSpec& tech) {
  switch (tech.score) {
    case ScoreMethod::FRegression: return f_regression_scores(ds);
    case ScoreMethod::MutualInfo: return mutual_info_scores(ds, tech.mi);
    case ScoreMethod::ChiSquared:
      return chi_squared_scores(ds, tech.chi2_target_bins, tech.chi2_feature_bins);
    case ScoreMethod::LassoMagnitude: {
      LinearModel m = fit_lasso(ds.features(), ds.target(), tech.lasso_lambda);
      for (auto& c : m.coefficients) c = std::abs(c);
      return {std::move(m.coefficients), ScoreMethod::LassoMagnitude};
    }
    case ScoreMethod::ForestImportance:
      return {fit_forest(ds.features(), ds.target(), tech.forest).importances,
              ScoreMethod::ForestImportance};
  }
  fail(Errc::ParamError, "unknown score method");
}

inline SelectorModel fit_technique(const Dataset& ds, const TechniqueSpec& tech,
                                   std::uint64_t seed) {
  const std::size_t count = tech.k.value_or(half_up(ds.d()));
  switch (tech.kind) {
    case TechniqueKind::KBest: return select_k_best(compute_scores(ds, tech), count);
    case TechniqueKind::Rfe:
      return rfe_fit(ds, count, make_fit_predict(tech.estimator), tech.inner_folds, seed);
    case TechniqueKind::Pca: return pca_fit(ds, count);
  }
  fail(Errc::ParamError, "unknown technique kind");
}

/// Fits every technique of the ensemble on ds (already standardized) and combines them.
inline SelectorModel fit_selector(const Dataset& ds, const SelectorSpec& spec,
                                  std::uint64_t seed) {
  if (spec.techniques.empty()) return identity_selector(ds.d());
  std::vector<SelectorModel> members;
  if (spec.strategy == EnsembleStrategy::MajorityVote) {
    for (const auto& tech : spec.techniques) {
      require(tech.kind != TechniqueKind::Pca, Errc::StrategyError,
              "PCA has no per-feature vote and cannot join a majority vote");
      members.push_back(fit_technique(ds, tech, seed));
    }
    return ensemble_combine(members, spec.strategy, spec.vote_k.value_or(half_up(ds.d())));
  }
  Dataset current = ds;
  for (std::size_t s = 0; s < spec.techniques.size(); ++s) {
    SelectorModel m = fit_technique(current, spec.techniques[s], seed);
    if (!m.index_based())
      require(s + 1 == spec.techniques.size(), Errc::StrategyError,
              "PCA may only appear as the last technique of a chain");
    else
      current = current.columns(m.kept_indices);
    members.push_back(std::move(m));
  }
  return ensemble_combine(members, EnsembleStrategy::Chain, 0);
}

struct PipelineOptions {
  bool target_scaling = true;
  std::uint64_t seed = 42;
};

/// Standardizer, target scaler, selector, and regressor, all fitted on training rows.
struct FittedPipeline {
  Standardizer standardizer;
  TargetScaler target_scaler;
  SelectorModel selector;
  RegressorModel regressor;
  std::vector<std::string> selected_features;  // original names of kept columns
  std::vector<std::string> output_names;       // names of the regressor's inputs

  Matrix transform(const Matrix& x) const {
    return selector_transform(selector, standardizer.apply(x));
  }
  /// Predictions on the scaled target axis (the axis metrics are reported on).
  Vector predict_scaled(const Matrix& x) const { return fsbench::predict(regressor, transform(x)); }
  Vector predict(const Matrix& x) const {
    Vector out = predict_scaled(x);
    for (auto& v : out) v = target_scaler.invert(v);
    return out;
  }
};

/// Training data after the pipeline's unsupervised preprocessing.
struct PreparedData {
  Standardizer standardizer;
  TargetScaler target_scaler;
  Dataset data;
};

inline PreparedData prepare(const Dataset& train, const PipelineOptions& opts) {
  auto [standardized, standardizer] = standardize(train);
  const TargetScaler scaler =
      opts.target_scaling ? TargetScaler::fit(train.target()) : TargetScaler::identity();
  Dataset data = standardized.with_target(scaler.apply(train.target()));
  return {std::move(standardizer), scaler, std::move(data)};
}

inline std::vector<std::string> output_names(const Dataset& ds, const SelectorModel& selector) {
  std::vector<std::string> names;
  if (selector.pca) {
    for (std::size_t c = 0; c < selector.output_dim(); ++c) names.push_back("PC" + std::to_string(c + 1));
  } else {
    for (auto j : selector.kept_indices) names.push_back(ds.feature_names()[j]);
  }
  return names;
}

inline FittedPipeline fit_pipeline_with_selector(const PreparedData& prepared,
                                                 const SelectorModel& selector,
                                                 const RegressorSpec& regressor) {
  require(selector.input_dim == prepared.data.d(), Errc::ShapeError,
          "selector width does not match the data");
  const Matrix xs = selector_transform(selector, prepared.data.features());
  FittedPipeline p{prepared.standardizer, prepared.target_scaler, selector,
                   fit_regressor(regressor, xs, prepared.data.target()), {}, {}};
  for (auto j : selector.kept_indices) p.selected_features.push_back(prepared.data.feature_names()[j]);
  p.output_names = output_names(prepared.data, selector);
  return p;
}

/// Learns every statistic from train only; applying the result to other rows reuses
/// the stored transforms.
inline FittedPipeline fit_pipeline(const Dataset& train, const SelectorSpec& selector,
                                   const RegressorSpec& regressor,
                                   const PipelineOptions& opts = {}) {
  const PreparedData prepared = prepare(train, opts);
  return fit_pipeline_with_selector(prepared, fit_selector(prepared.data, selector, opts.seed),
                                    regressor);
}

struct CvSummary {
  Vector fold_rmse;
  Vector fold_r2;  // NaN when a held-out fold has a constant target
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<std::vector<std::size_t>> fold_selected;

  static CvSummary from_folds(Vector fold_rmse) {
    CvSummary s;
    const double k = static_cast<double>(fold_rmse.size());
    s.mean = std::accumulate(fold_rmse.begin(), fold_rmse.end(), 0.0) / k;
    double var = 0.0;
    for (double v : fold_rmse) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / k);
    s.fold_rmse = std::move(fold_rmse);
    return s;
  }
};

struct CvOptions {
  std::size_t k = 5;
  std::uint64_t seed = 42;
  bool target_scaling = true;
  bool global_selection = false;  // fit the selector once on all rows (leaky legacy protocol)
};

/// Cross-validates one selector spec against several regressors. The selector is fitted
/// once per fold and shared by every regressor; each result equals what a separate
/// cross_validate call would produce.
inline std::vector<CvSummary> cross_validate_grid(const Dataset& ds, const SelectorSpec& selector,
                                                  const std::vector<RegressorSpec>& regressors,
                                                  const CvOptions& opts = {}) {
  const FoldPlan plan = kfold(ds.n(), opts.k, opts.seed);
  const PipelineOptions popts{opts.target_scaling, opts.seed};
  std::optional<SelectorModel> global;
  if (opts.global_selection) global = fit_selector(prepare(ds, popts).data, selector, opts.seed);

  std::vector<Vector> rmses(regressors.size()), r2s(regressors.size());
  std::vector<std::vector<std::size_t>> selected;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto train_rows = plan.train_rows(f);
    const auto test_rows = plan.test_rows(f);
    const Dataset test = ds.rows(test_rows);
    const PreparedData prepared = prepare(ds.rows(train_rows), popts);
    const SelectorModel model = global ? *global : fit_selector(prepared.data, selector, opts.seed);
    selected.push_back(model.kept_indices);
    const Vector y_eval = prepared.target_scaler.apply(test.target());
    for (std::size_t r = 0; r < regressors.size(); ++r) {
      const FittedPipeline p = fit_pipeline_with_selector(prepared, model, regressors[r]);
      const Vector pred = p.predict_scaled(test.features());
      rmses[r].push_back(rmse(y_eval, pred));
      r2s[r].push_back(detail::is_constant(y_eval) ? std::numeric_limits<double>::quiet_NaN()
                                                   : r_squared(y_eval, pred));
    }
  }
  std::vector<CvSummary> out;
  for (std::size_t r = 0; r < regressors.size(); ++r) {
    CvSummary s = CvSummary::from_folds(std::move(rmses[r]));
    s.fold_r2 = std::move(r2s[r]);
    s.fold_selected = selected;
    out.push_back(std::move(s));
  }
  return out;
}

inline CvSummary cross_validate(const Dataset& ds, const SelectorSpec& selector,
                                const RegressorSpec& regressor, const CvOptions& opts = {}) {
  return cross_validate_grid(ds, selector, {regressor}, opts).front();
}

/// Two-decimal fixed rendering (printf rounding: exact binary value, ties to even).
inline std::string format_fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  std::string s(buf);
  return s == "-0.00" ? "0.00" : s;
}

inline std::string format_cv(double mean, double std) {
  return format_fixed2(mean) + " +/- " + format_fixed2(std);
}

inline std::string format_cv(const CvSummary& summary) { return format_cv(summary.mean, summary.std); }

}  // namespace fsbench
