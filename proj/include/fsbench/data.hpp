#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fsbench/error.hpp"
#include "fsbench/linalg.hpp"
#include "fsbench/random.hpp"

namespace fsbench {

/// Feature matrix plus target, with column names. Immutable once built.
class Dataset {
 public:
  Dataset(Matrix features, Vector target, std::vector<std::string> feature_names,
          std::string target_name)
      : features_(std::move(features)),
        target_(std::move(target)),
        feature_names_(std::move(feature_names)),
        target_name_(std::move(target_name)) {
    require(features_.rows() == target_.size(), Errc::ShapeError,
            "feature rows " + std::to_string(features_.rows()) + " != target length " +
                std::to_string(target_.size()));
    require(feature_names_.size() == features_.cols(), Errc::SchemaError,
            "expected " + std::to_string(features_.cols()) + " feature names");
    std::set<std::string_view> seen;
    for (const auto& name : feature_names_) {
      require(!name.empty(), Errc::SchemaError, "empty feature name");
      require(seen.insert(name).second, Errc::SchemaError, "duplicate feature name '" + name + "'");
    }
  }

  const Matrix& features() const noexcept { return features_; }
  const Vector& target() const noexcept { return target_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::string& target_name() const noexcept { return target_name_; }
  std::size_t n() const noexcept { return features_.rows(); }
  std::size_t d() const noexcept { return features_.cols(); }

  Dataset rows(std::span<const std::size_t> indices) const {
    Vector y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) y[i] = target_[indices[i]];
    return {select_rows(features_, indices), std::move(y), feature_names_, target_name_};
  }

  Dataset columns(std::span<const std::size_t> indices) const {
    std::vector<std::string> names;
    names.reserve(indices.size());
    for (auto j : indices) names.push_back(feature_names_[j]);
    return {select_columns(features_, indices), target_, std::move(names), target_name_};
  }

  Dataset with_features(Matrix features, std::vector<std::string> names) const {
    return {std::move(features), target_, std::move(names), target_name_};
  }

  Dataset with_target(Vector target) const {
    return {features_, std::move(target), feature_names_, target_name_};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Matrix features_;
  Vector target_;
  std::vector<std::string> feature_names_;
  std::string target_name_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

/// Parses a header-first numeric CSV. Every non-target column becomes a feature, in
/// header order.
inline Dataset parse_csv(std::istream& in, std::string_view target_column) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::SchemaError, "missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_fields(line);

  std::set<std::string_view> seen;
  for (auto name : header) {
    require(!name.empty(), Errc::SchemaError, "empty header name");
    require(seen.insert(name).second, Errc::SchemaError,
            "duplicate header name '" + std::string(name) + "'");
  }
  const auto target_it = std::find(header.begin(), header.end(), target_column);
  require(target_it != header.end(), Errc::SchemaError,
          "target column '" + std::string(target_column) + "' not in header");
  require(header.size() >= 2, Errc::SchemaError, "no feature columns");
  const std::size_t target_idx = static_cast<std::size_t>(target_it - header.begin());

  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != target_idx) names.emplace_back(header[j]);

  std::vector<double> cells;
  Vector target;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size())
      throw ParseFailure(row_number, std::min(fields.size(), header.size()) + 1,
                         "expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto field = fields[j];
      double value = 0.0;
      const auto* end = field.data() + field.size();
      auto [ptr, ec] = std::from_chars(field.data(), end, value);
      if (field.empty() || ec != std::errc{} || ptr != end || !std::isfinite(value))
        throw ParseFailure(row_number, j + 1, "'" + std::string(field) + "' is not a finite number");
      if (j == target_idx)
        target.push_back(value);
      else
        cells.push_back(value);
    }
  }
  require(!target.empty(), Errc::SchemaError, "no data rows");
  return {Matrix(target.size(), names.size(), std::move(cells)), std::move(target),
          std::move(names), std::string(target_column)};
}

inline Dataset load_csv(const std::string& path, std::string_view target_column) {
  std::ifstream in(path);
  require(in.good(), Errc::IoError, "cannot open '" + path + "'");
  return parse_csv(in, target_column);
}

/// Per-column affine transform learned on training data.
struct Standardizer {
  Vector means;
  Vector scales;            // population standard deviation, 1 for constant columns
  std::vector<bool> constant;

  Matrix apply(const Matrix& x) const {
    require(x.cols() == means.size(), Errc::ShapeError, "standardizer width mismatch");
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        out(i, j) = constant[j] ? 0.0 : (x(i, j) - means[j]) / scales[j];
    return out;
  }
};

inline Standardizer fit_standardizer(const Matrix& x) {
  require(x.rows() >= 2, Errc::InsufficientRows, "standardize needs at least 2 rows");
  Standardizer s{column_means(x), Vector(x.cols(), 0.0), std::vector<bool>(x.cols(), false)};
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double dev = x(i, j) - s.means[j];
      s.scales[j] += dev * dev;
    }
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt(s.scales[j] / static_cast<double>(x.rows()));
    // Relative test so that a column of identical large readings still counts as stuck.
    s.constant[j] = !(sd > 1e-12 * std::max(1.0, std::abs(s.means[j])));
    s.scales[j] = s.constant[j] ? 1.0 : sd;
  }
  return s;
}

/// Zero-mean, unit population variance features; constant columns become zeros and
/// are flagged in the returned transform.
inline std::pair<Dataset, Standardizer> standardize(const Dataset& ds) {
  Standardizer s = fit_standardizer(ds.features());
  return {ds.with_features(s.apply(ds.features()), ds.feature_names()), std::move(s)};
}

/// Min-max map of the target onto [0, 1], learned on training targets.
struct TargetScaler {
  double min = 0.0;
  double range = 1.0;

  double apply(double y) const noexcept { return (y - min) / range; }
  double invert(double z) const noexcept { return z * range + min; }

  Vector apply(std::span<const double> y) const {
    Vector out(y.size());
    std::transform(y.begin(), y.end(), out.begin(), [&](double v) { return apply(v); });
    return out;
  }

  static TargetScaler identity() noexcept { return {}; }

  static TargetScaler fit(std::span<const double> y) {
    require(!y.empty(), Errc::ShapeError, "empty target");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    return {*lo, range > 0.0 ? range : 1.0};
  }
};

/// Returns (train, test). Test size is round(n * test_fraction) clamped to [1, n-1].
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double test_fraction,
                                                    std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, Errc::SplitError,
          "test fraction must lie in (0, 1)");
  const std::size_t n = ds.n();
  require(n >= 2, Errc::SplitError, "need at least 2 rows to split");
  const auto wanted = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  const std::size_t n_test = std::clamp<std::size_t>(wanted, 1, n - 1);

  Xoshiro256 rng(seed);
  const auto order = permutation(n, rng);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {ds.rows(train), ds.rows(test)};
}

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per row

  std::vector<std::size_t> test_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> train_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != fold) out.push_back(i);
    return out;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Shuffled k-fold assignment; the first n % k folds receive one extra row.
inline FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  require(k >= 2, Errc::FoldError, "k must be at least 2, got " + std::to_string(k));
  require(k <= n, Errc::FoldError,
          "k=" + std::to_string(k) + " exceeds row count " + std::to_string(n));
  Xoshiro256 rng(seed);
  const auto order = permutation(n, rng);
  FoldPlan plan{k, std::vector<std::size_t>(n)};
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) plan.assignments[order[pos++]] = f;
  }
  return plan;
}

struct SyntheticSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  Vector true_coefficients;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1 && d >= 1, Errc::ParamError, "synthetic n and d must be positive");
    require(true_coefficients.size() == d, Errc::ParamError,
            "expected " + std::to_string(d) + " coefficients, got " +
                std::to_string(true_coefficients.size()));
    require(std::any_of(true_coefficients.begin(), true_coefficients.end(),
                        [](double c) { return c != 0.0; }),
            Errc::ParamError, "at least one coefficient must be nonzero");
    require(std::all_of(true_coefficients.begin(), true_coefficients.end(),
                        [](double c) { return std::isfinite(c); }),
            Errc::ParamError, "coefficients must be finite");
    require(noise_sd >= 0.0 && std::isfinite(noise_sd), Errc::ParamError,
            "noise_sd must be non-negative");
  }
};

struct SyntheticData {
  Dataset dataset;
  std::vector<std::size_t> support;  // indices of nonzero coefficients
};

/// X ~ N(0, 1) i.i.d., y = X * coefficients + N(0, noise_sd^2). Features are named x1..xd.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Xoshiro256 rng(spec.seed);
  Matrix x(spec.n, spec.d);
  for (std::size_t i = 0; i < spec.n; ++i)
    for (auto& v : x.row(i)) v = rng.normal();
  Vector y = matvec(x, spec.true_coefficients);
  if (spec.noise_sd > 0.0)
    for (auto& v : y) v += spec.noise_sd * rng.normal();

  std::vector<std::string> names;
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < spec.d; ++j) {
    names.push_back("x" + std::to_string(j + 1));
    if (spec.true_coefficients[j] != 0.0) support.push_back(j);
  }
  return {Dataset(std::move(x), std::move(y), std::move(names), "y"), std::move(support)};
}

}  // namespace fsbench
