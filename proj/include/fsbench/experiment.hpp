#pragma once

// Declarative experiment configuration and the driver that runs every
// (selector ensemble x regressor) cell of it.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fsbench/data.hpp"
#include "fsbench/error.hpp"
#include "fsbench/eval.hpp"
#include "fsbench/report.hpp"
#include "fsbench/selection.hpp"

namespace fsbench {

struct CsvSource {
  std::string path;
  std::string target;
};

struct ExperimentConfig {
  std::variant<CsvSource, SyntheticSpec> dataset;
  bool target_scaling = true;
  double test_fraction = 0.2;
  std::size_t cv_folds = 5;
  std::uint64_t seed = 42;
  bool global_selection = false;
  std::vector<SelectorSpec> selector_ensembles;
  std::vector<RegressorSpec> regressors;
};

/// A configuration problem, anchored to the line of the offending JSON value.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, std::string pointer, const std::string& message)
      : Error(Errc::ConfigError, "line " + std::to_string(line) + ": " + message),
        line_(line), pointer_(std::move(pointer)), message_(message) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& pointer() const noexcept { return pointer_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t line_;
  std::string pointer_;
  std::string message_;
};

namespace detail {

/// Maps each JSON pointer in a (valid) JSON text to the 1-based line where its value
/// starts.
inline std::map<std::string, std::size_t> json_value_lines(const std::string& text) {
  struct Frame {
    bool object;
    std::string key;
    std::size_t index = 0;
    bool expecting_key = true;
  };
  std::map<std::string, std::size_t> lines;
  std::vector<Frame> stack;
  std::size_t line = 1;

  auto pointer = [&] {
    std::string p;
    for (const auto& f : stack) p += "/" + (f.object ? f.key : std::to_string(f.index));
    return p;
  };
  auto record = [&] { lines.emplace(pointer(), line); };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\') ++i;
        if (i < text.size()) s += text[i];
      }
      if (!stack.empty() && stack.back().object && stack.back().expecting_key)
        stack.back().key = std::move(s);
      else
        record();
    } else if (c == ':') {
      stack.back().expecting_key = false;
    } else if (c == ',') {
      if (stack.back().object)
        stack.back().expecting_key = true;
      else
        ++stack.back().index;
    } else if (c == '{' || c == '[') {
      record();
      stack.push_back({c == '{', {}, 0, true});
    } else if (c == '}' || c == ']') {
      stack.pop_back();
    } else if (c != ' ' && c != '\t' && c != '\r') {
      record();
      while (i + 1 < text.size() && std::string_view(",}] \t\r\n").find(text[i + 1]) ==
                                        std::string_view::npos)
        ++i;
    }
  }
  return lines;
}

class ConfigReader {
 public:
  explicit ConfigReader(const std::string& text) : lines_(json_value_lines(text)) {}

  [[noreturn]] void error(std::string pointer, const std::string& message) const {
    std::string probe = pointer;
    for (;;) {
      if (auto it = lines_.find(probe); it != lines_.end())
        throw ConfigError(it->second, pointer, message);
      if (probe.empty()) throw ConfigError(1, pointer, message);
      probe.erase(probe.rfind('/'));
    }
  }

  void check_keys(const nlohmann::json& obj, const std::string& at,
                  std::initializer_list<std::string_view> allowed) const {
    if (!obj.is_object()) error(at, "expected an object");
    for (const auto& [key, value] : obj.items())
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        error(at + "/" + key, "unknown key '" + key + "'");
  }

  template <typename T>
  std::optional<T> optional(const nlohmann::json& obj, const std::string& at,
                            const std::string& key) const {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    const auto& v = obj.at(key);
    const std::string where = at + "/" + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) error(where, "'" + key + "' must be true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) error(where, "'" + key + "' must be a string");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned())
        error(where, "'" + key + "' must be a non-negative integer");
    } else {
      if (!v.is_number()) error(where, "'" + key + "' must be a number");
    }
    return v.get<T>();
  }

  template <typename T>
  T required(const nlohmann::json& obj, const std::string& at, const std::string& key) const {
    if (!obj.is_object() || !obj.contains(key)) error(at, "missing required key '" + key + "'");
    auto v = optional<T>(obj, at, key);
    if (!v) error(at + "/" + key, "'" + key + "' must not be null");
    return *v;
  }

 private:
  std::map<std::string, std::size_t> lines_;
};

inline ForestParams read_forest(const ConfigReader& r, const nlohmann::json& obj,
                                const std::string& at, ForestParams p) {
  if (auto v = r.optional<std::size_t>(obj, at, "n_trees")) p.n_trees = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "max_depth")) p.max_depth = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "min_samples_leaf")) p.min_samples_leaf = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "features_per_split")) p.features_per_split = *v;
  if (auto v = r.optional<bool>(obj, at, "bootstrap")) p.bootstrap = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "threads")) p.threads = *v;
  if (p.n_trees < 1) r.error(at + "/n_trees", "n_trees must be at least 1");
  if (p.min_samples_leaf < 1) r.error(at + "/min_samples_leaf", "min_samples_leaf must be at least 1");
  return p;
}

inline RegressorSpec read_regressor(const ConfigReader& r, const nlohmann::json& obj,
                                    const std::string& at) {
  r.check_keys(obj, at,
               {"kind", "label", "lambda", "tol", "max_iter", "n_trees", "max_depth",
                "min_samples_leaf", "features_per_split", "bootstrap", "threads"});
  static const std::map<std::string, RegressorKind, std::less<>> kinds{
      {"linear", RegressorKind::Linear}, {"ridge", RegressorKind::Ridge},
      {"lasso", RegressorKind::Lasso},   {"forest", RegressorKind::Forest},
      {"mean", RegressorKind::Mean}};
  const auto kind = r.required<std::string>(obj, at, "kind");
  const auto it = kinds.find(kind);
  if (it == kinds.end())
    r.error(at + "/kind", "unknown regressor kind '" + kind + "' (linear, ridge, lasso, forest, mean)");
  RegressorSpec spec = make_regressor(it->second);
  if (auto v = r.optional<std::string>(obj, at, "label")) spec.label = *v;
  if (auto v = r.optional<double>(obj, at, "lambda")) spec.lambda = *v;
  if (auto v = r.optional<double>(obj, at, "tol")) spec.lasso.tol = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "max_iter")) spec.lasso.max_iter = *v;
  spec.forest = read_forest(r, obj, at, spec.forest);
  if (spec.kind == RegressorKind::Ridge && !(spec.lambda >= 0.0))
    r.error(at + "/lambda", "ridge lambda must be non-negative");
  if (spec.kind == RegressorKind::Lasso && !(spec.lambda > 0.0))
    r.error(at + "/lambda", "lasso lambda must be positive");
  if (spec.lasso.tol <= 0.0) r.error(at + "/tol", "tol must be positive");
  if (spec.lasso.max_iter < 1) r.error(at + "/max_iter", "max_iter must be at least 1");
  return spec;
}

inline TechniqueSpec read_technique(const ConfigReader& r, const nlohmann::json& obj,
                                    const std::string& at) {
  r.check_keys(obj, at,
               {"kind", "score", "k", "n_select", "bins", "target_bins", "feature_bins",
                "lambda", "inner_folds", "estimator", "n_trees", "max_depth",
                "min_samples_leaf", "features_per_split", "bootstrap", "threads"});
  TechniqueSpec t;
  const auto kind = r.required<std::string>(obj, at, "kind");
  if (kind == "kbest") {
    t.kind = TechniqueKind::KBest;
    static const std::map<std::string, ScoreMethod, std::less<>> scores{
        {"f_regression", ScoreMethod::FRegression}, {"mutual_info", ScoreMethod::MutualInfo},
        {"chi2", ScoreMethod::ChiSquared},          {"lasso", ScoreMethod::LassoMagnitude},
        {"forest", ScoreMethod::ForestImportance}};
    const auto score = r.optional<std::string>(obj, at, "score").value_or("f_regression");
    const auto it = scores.find(score);
    if (it == scores.end())
      r.error(at + "/score",
              "unknown score '" + score + "' (f_regression, mutual_info, chi2, lasso, forest)");
    t.score = it->second;
  } else if (kind == "rfe") {
    t.kind = TechniqueKind::Rfe;
  } else if (kind == "pca") {
    t.kind = TechniqueKind::Pca;
  } else {
    r.error(at + "/kind", "unknown technique kind '" + kind + "' (kbest, rfe, pca)");
  }
  t.k = r.optional<std::size_t>(obj, at, t.kind == TechniqueKind::Rfe ? "n_select" : "k");
  if (t.k && *t.k < 1)
    r.error(at + (t.kind == TechniqueKind::Rfe ? "/n_select" : "/k"), "must keep at least 1 feature");
  if (auto v = r.optional<std::size_t>(obj, at, "bins")) t.mi.bins = *v;
  if (t.mi.bins == 1) r.error(at + "/bins", "bins must be at least 2");
  if (auto v = r.optional<std::size_t>(obj, at, "target_bins")) t.chi2_target_bins = *v;
  if (auto v = r.optional<std::size_t>(obj, at, "feature_bins")) t.chi2_feature_bins = *v;
  if (t.chi2_target_bins < 2) r.error(at + "/target_bins", "target_bins must be at least 2");
  if (t.chi2_feature_bins < 2) r.error(at + "/feature_bins", "feature_bins must be at least 2");
  if (auto v = r.optional<double>(obj, at, "lambda")) t.lasso_lambda = *v;
  if (!(t.lasso_lambda > 0.0)) r.error(at + "/lambda", "lambda must be positive");
  if (auto v = r.optional<std::size_t>(obj, at, "inner_folds")) t.inner_folds = *v;
  if (t.inner_folds < 2) r.error(at + "/inner_folds", "inner_folds must be at least 2");
  t.forest = read_forest(r, obj, at, t.forest);
  if (obj.contains("estimator")) t.estimator = read_regressor(r, obj.at("estimator"), at + "/estimator");
  return t;
}

inline std::string config_digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

/// Forests everywhere in the experiment draw from the experiment seed.
inline void apply_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  for (auto& r : cfg.regressors) r.forest.seed = seed;
  for (auto& e : cfg.selector_ensembles)
    for (auto& t : e.techniques) {
      t.forest.seed = seed;
      t.estimator.forest.seed = seed;
    }
}

/// Parses and validates a configuration document. Relative CSV paths resolve against
/// base_dir. Throws ConfigError.
inline ExperimentConfig parse_config(const std::string& text,
                                     const std::filesystem::path& base_dir = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(
                              std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(
                                                                           offset > 0 ? offset - 1 : 0),
                                         '\n'));
    throw ConfigError(line, "", std::string("invalid JSON: ") + e.what());
  }
  const detail::ConfigReader r(text);
  r.check_keys(doc, "",
               {"dataset", "target_scaling", "test_fraction", "cv_folds", "seed",
                "global_selection", "selector_ensembles", "regressors"});

  ExperimentConfig cfg;
  if (!doc.contains("dataset")) r.error("", "missing required key 'dataset'");
  const auto& ds = doc.at("dataset");
  r.check_keys(ds, "/dataset", {"csv", "target", "synthetic"});
  if (ds.contains("synthetic")) {
    const auto& s = ds.at("synthetic");
    const std::string at = "/dataset/synthetic";
    r.check_keys(s, at, {"n", "d", "coefficients", "noise_sd", "seed"});
    SyntheticSpec spec;
    spec.n = r.required<std::size_t>(s, at, "n");
    spec.d = r.required<std::size_t>(s, at, "d");
    if (!s.contains("coefficients") || !s.at("coefficients").is_array())
      r.error(at, "'coefficients' must be an array of numbers");
    for (const auto& c : s.at("coefficients")) {
      if (!c.is_number()) r.error(at + "/coefficients", "'coefficients' must be numbers");
      spec.true_coefficients.push_back(c.get<double>());
    }
    spec.noise_sd = r.optional<double>(s, at, "noise_sd").value_or(0.0);
    spec.seed = r.optional<std::uint64_t>(s, at, "seed").value_or(0);
    try {
      spec.validate();
    } catch (const Error& e) {
      r.error(at, e.what());
    }
    cfg.dataset = spec;
  } else {
    CsvSource src{r.required<std::string>(ds, "/dataset", "csv"),
                  r.required<std::string>(ds, "/dataset", "target")};
    std::filesystem::path p(src.path);
    if (p.is_relative() && !base_dir.empty()) src.path = (base_dir / p).string();
    cfg.dataset = src;
  }

  cfg.target_scaling = r.optional<bool>(doc, "", "target_scaling").value_or(true);
  cfg.test_fraction = r.optional<double>(doc, "", "test_fraction").value_or(0.2);
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    r.error("/test_fraction", "test_fraction must lie in (0, 1)");
  cfg.cv_folds = r.optional<std::size_t>(doc, "", "cv_folds").value_or(5);
  if (cfg.cv_folds < 2) r.error("/cv_folds", "cv_folds must be at least 2");
  cfg.seed = r.optional<std::uint64_t>(doc, "", "seed").value_or(42);
  cfg.global_selection = r.optional<bool>(doc, "", "global_selection").value_or(false);

  if (!doc.contains("selector_ensembles") || !doc.at("selector_ensembles").is_array() ||
      doc.at("selector_ensembles").empty())
    r.error("/selector_ensembles", "at least one selector ensemble is required");
  std::set<std::string> labels;
  for (std::size_t e = 0; e < doc.at("selector_ensembles").size(); ++e) {
    const auto& obj = doc.at("selector_ensembles")[e];
    const std::string at = "/selector_ensembles/" + std::to_string(e);
    r.check_keys(obj, at, {"label", "techniques", "strategy", "k"});
    SelectorSpec spec;
    spec.label = r.required<std::string>(obj, at, "label");
    if (spec.label.empty()) r.error(at + "/label", "label must not be empty");
    if (!labels.insert(spec.label).second) r.error(at + "/label", "duplicate ensemble label");
    const auto strategy = r.optional<std::string>(obj, at, "strategy").value_or("chain");
    if (strategy == "chain")
      spec.strategy = EnsembleStrategy::Chain;
    else if (strategy == "majority_vote")
      spec.strategy = EnsembleStrategy::MajorityVote;
    else
      r.error(at + "/strategy", "unknown strategy '" + strategy + "' (chain, majority_vote)");
    spec.vote_k = r.optional<std::size_t>(obj, at, "k");
    if (spec.vote_k && *spec.vote_k < 1) r.error(at + "/k", "k must be at least 1");
    if (obj.contains("techniques")) {
      if (!obj.at("techniques").is_array()) r.error(at + "/techniques", "'techniques' must be an array");
      for (std::size_t t = 0; t < obj.at("techniques").size(); ++t)
        spec.techniques.push_back(read_technique(r, obj.at("techniques")[t],
                                                 at + "/techniques/" + std::to_string(t)));
    }
    for (std::size_t t = 0; t < spec.techniques.size(); ++t) {
      const bool pca = spec.techniques[t].kind == TechniqueKind::Pca;
      if (pca && spec.strategy == EnsembleStrategy::MajorityVote)
        r.error(at + "/techniques/" + std::to_string(t), "PCA cannot join a majority vote");
      if (pca && t + 1 != spec.techniques.size())
        r.error(at + "/techniques/" + std::to_string(t), "PCA must be the last technique of a chain");
    }
    cfg.selector_ensembles.push_back(std::move(spec));
  }

  if (!doc.contains("regressors") || !doc.at("regressors").is_array() ||
      doc.at("regressors").empty())
    r.error("/regressors", "at least one regressor is required");
  std::set<std::string> regressor_labels;
  for (std::size_t i = 0; i < doc.at("regressors").size(); ++i) {
    const std::string at = "/regressors/" + std::to_string(i);
    RegressorSpec spec = detail::read_regressor(r, doc.at("regressors")[i], at);
    if (!regressor_labels.insert(spec.display_label()).second)
      r.error(at, "duplicate regressor label '" + spec.display_label() + "'");
    cfg.regressors.push_back(std::move(spec));
  }
  apply_seed(cfg, cfg.seed);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoError, "cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::filesystem::path(path).parent_path());
}

inline Dataset load_dataset(const ExperimentConfig& cfg) {
  if (const auto* csv = std::get_if<CsvSource>(&cfg.dataset)) return load_csv(csv->path, csv->target);
  return generate_synthetic(std::get<SyntheticSpec>(cfg.dataset)).dataset;
}

/// Checks that every technique's feature count fits the columns it will see.
inline void validate_dimensions(const ExperimentConfig& cfg, std::size_t d) {
  for (const auto& e : cfg.selector_ensembles) {
    std::size_t width = d;
    for (const auto& t : e.techniques) {
      const std::size_t k = t.k.value_or(half_up(width));
      const bool rfe = t.kind == TechniqueKind::Rfe;
      require(k >= 1 && (rfe ? k < width : k <= width), Errc::ParamError,
              "ensemble '" + e.label + "': technique keeps " + std::to_string(k) + " of " +
                  std::to_string(width) + " columns");
      if (e.strategy == EnsembleStrategy::Chain) width = k;
    }
    if (e.strategy == EnsembleStrategy::MajorityVote && e.vote_k)
      require(*e.vote_k <= d, Errc::ParamError, "ensemble '" + e.label + "': vote k exceeds d");
  }
}

struct ExperimentOutcome {
  std::vector<ExperimentResult> results;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Cross-validates every cell on the training split, then refits on the whole training
/// split and scores the held-out split. Metrics are on the (scaled) target axis.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
  validate_dimensions(cfg, ds.d());
  const auto [train, test] = train_test_split(ds, cfg.test_fraction, cfg.seed);
  const CvOptions cv_opts{cfg.cv_folds, cfg.seed, cfg.target_scaling, cfg.global_selection};
  const PipelineOptions popts{cfg.target_scaling, cfg.seed};
  const PreparedData prepared = prepare(train, popts);

  ExperimentOutcome outcome{{}, train.n(), test.n()};
  for (const auto& ensemble : cfg.selector_ensembles) {
    const auto summaries = cross_validate_grid(train, ensemble, cfg.regressors, cv_opts);
    const SelectorModel selector = fit_selector(prepared.data, ensemble, cfg.seed);
    const Vector y_test = prepared.target_scaler.apply(test.target());
    for (std::size_t r = 0; r < cfg.regressors.size(); ++r) {
      const FittedPipeline p = fit_pipeline_with_selector(prepared, selector, cfg.regressors[r]);
      const Vector pred = p.predict_scaled(test.features());
      ExperimentResult result{ensemble.label, cfg.regressors[r].display_label(), summaries[r],
                              rmse(y_test, pred), r_squared(y_test, pred), p.selected_features,
                              std::nullopt};
      if (const auto* forest = std::get_if<ForestModel>(&p.regressor)) {
        NamedValues imp;
        for (std::size_t j = 0; j < forest->importances.size(); ++j)
          imp.emplace_back(p.output_names[j], forest->importances[j]);
        result.importances = std::move(imp);
      }
      outcome.results.push_back(std::move(result));
    }
  }
  return outcome;
}

inline std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-')
      out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "unnamed" : out;
}

inline std::string importance_chart_name(const ExperimentResult& r) {
  return "importances-" + slug(r.regressor_label) + "-" + slug(r.selector_label) + ".svg";
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes results.json, table.md and one chart per forest cell into out_dir. Files
/// are staged in a sibling directory and renamed into place only once all succeed.
inline std::vector<std::string> write_outputs(const std::filesystem::path& out_dir,
                                             const std::vector<ExperimentResult>& results,
                                             const ResultsMetadata& meta) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
  const fs::path staging = out_dir / ".fsbench-staging";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  require(!ec, Errc::IoError, "cannot create staging directory: " + ec.message());

  std::vector<std::pair<std::string, std::string>> files{
      {"results.json", dump_results_json(results, meta)},
      {"table.md", render_table(results, TableFormat::Markdown)}};
  for (const auto& r : results)
    if (r.importances)
      files.emplace_back(importance_chart_name(r),
                         render_importance_chart(*r.importances, "Feature Importance: " +
                                                                     r.regressor_label + " / " +
                                                                     r.selector_label));
  try {
    for (const auto& [name, text] : files) write_text_file((staging / name).string(), text);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  std::vector<std::string> written;
  for (const auto& [name, text] : files) {
    fs::rename(staging / name, out_dir / name, ec);
    require(!ec, Errc::IoError, "cannot move '" + name + "' into place: " + ec.message());
    written.push_back(name);
  }
  fs::remove_all(staging, ec);
  return written;
}

}  // namespace fsbench
