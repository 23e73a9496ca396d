#pragma once

// Subcommand wiring for the fsbench executable: run, generate, score.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsbench/data.hpp"
#include "fsbench/error.hpp"
#include "fsbench/eval.hpp"
#include "fsbench/experiment.hpp"
#include "fsbench/report.hpp"
#include "fsbench/selection.hpp"

namespace fsbench::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageFailure = 2;

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool global_selection = false;
};

inline int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(args.config);
  } catch (const ConfigError& e) {
    err << args.config << ":" << e.line() << ": error: " << e.message() << "\n";
    return kUsageFailure;
  } catch (const Error& e) {
    err << args.config << ": error: " << e.what() << "\n";
    return kUsageFailure;
  }
  if (args.seed) apply_seed(cfg, *args.seed);
  if (args.global_selection) cfg.global_selection = true;

  try {
    const Dataset ds = load_dataset(cfg);
    try {
      validate_dimensions(cfg, ds.d());
    } catch (const Error& e) {
      err << args.config << ": error: " << e.what() << "\n";
      return kUsageFailure;
    }
    const ExperimentOutcome outcome = run_experiment(cfg, ds);
    std::ifstream in(args.config, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    const ResultsMetadata meta{static_cast<std::int64_t>(cfg.seed),
                               detail::config_digest(text.str()), utc_timestamp()};
    const auto written = write_outputs(args.out, outcome.results, meta);
    out << render_table(outcome.results, TableFormat::Markdown);
    out << "\n" << outcome.results.size() << " cells (" << outcome.n_train << " train / "
        << outcome.n_test << " test rows); wrote";
    for (const auto& name : written) out << ' ' << name;
    out << " to " << args.out << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

struct GenerateArgs {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> coef;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err) {
  const SyntheticSpec spec{args.n, args.d, args.coef, args.noise, args.seed};
  try {
    spec.validate();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageFailure;
  }
  try {
    const SyntheticData data = generate_synthetic(spec);
    write_csv(args.out, data.dataset);
    nlohmann::json sidecar{{"support", data.support}, {"features", nlohmann::json::array()}};
    for (auto j : data.support) sidecar["features"].push_back(data.dataset.feature_names()[j]);
    write_text_file(args.out + ".support.json", sidecar.dump(2) + "\n");
    out << "wrote " << spec.n << " rows x " << spec.d + 1 << " columns to " << args.out
        << " (support in " << args.out << ".support.json)\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

struct ScoreArgs {
  std::string data;
  std::string target;
  std::string method;
  std::optional<std::size_t> k;
  std::optional<std::size_t> bins;
  std::uint64_t seed = 42;
};

inline const std::vector<std::string>& score_methods() {
  static const std::vector<std::string> methods{"f-regression", "mutual-info", "chi2", "rfe", "pca"};
  return methods;
}

/// Per-feature scores (or per-component variance explained for pca), highest first.
inline NamedValues compute_score_table(const Dataset& raw, const ScoreArgs& args) {
  const Dataset ds = standardize(raw).first;
  FeatureScores scores;
  std::vector<std::string> names = ds.feature_names();
  if (args.method == "f-regression") {
    scores = f_regression_scores(ds);
  } else if (args.method == "mutual-info") {
    scores = mutual_info_scores(ds, MiEstimatorConfig{args.bins.value_or(0)});
  } else if (args.method == "chi2") {
    scores = chi_squared_scores(ds, 5, args.bins.value_or(5));
  } else if (args.method == "rfe") {
    // Score = elimination rounds survived; the n_select kept features tie at the top.
    const SelectorModel m =
        rfe_fit(ds, args.k.value_or(1), make_fit_predict(make_regressor(RegressorKind::Linear)), 3,
                args.seed);
    scores.scores.resize(ds.d());
    for (std::size_t j = 0; j < ds.d(); ++j)
      scores.scores[j] = static_cast<double>(ds.d() - 1 - m.ranking[j]);
  } else if (args.method == "pca") {
    const SelectorModel m = pca_fit(ds, args.k.value_or(ds.d()));
    scores.scores = m.pca->variance_explained;
    names.clear();
    for (std::size_t c = 0; c < scores.scores.size(); ++c) names.push_back("PC" + std::to_string(c + 1));
  } else {
    fail(Errc::ParamError, "unknown method '" + args.method + "'");
  }
  NamedValues table;
  for (std::size_t j = 0; j < scores.scores.size(); ++j) table.emplace_back(names[j], scores.scores[j]);
  std::stable_sort(table.begin(), table.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return table;
}

inline int cmd_score(const ScoreArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const NamedValues table = compute_score_table(load_csv(args.data, args.target), args);
    std::size_t width = args.method == "pca" ? 9 : 7;
    for (const auto& row : table) width = std::max(width, row.first.size());
    const std::string header = args.method == "pca" ? "component" : "feature";
    const std::string value_header = args.method == "pca" ? "variance_explained_pct" : args.method;
    out << header << std::string(width - header.size() + 2, ' ') << value_header << "\n";
    for (const auto& [name, value] : table) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", value);
      out << name << std::string(width - name.size() + 2, ' ') << buf << "\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageFailure;
  }
  return kOk;
}

/// Parses args (without the program name) and dispatches to a subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-selection and regression benchmarking toolkit", "fsbench"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run every (selector ensemble x regressor) cell of a config");
  run_cmd->add_option("--config", run.config, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--seed", run.seed, "Override the config seed");
  run_cmd->add_flag("--global-selection", run.global_selection,
                    "Fit selectors once on the whole training split instead of per fold");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset with known support");
  gen_cmd->add_option("--n", gen.n, "Rows")->required();
  gen_cmd->add_option("--d", gen.d, "Features")->required();
  gen_cmd->add_option("--coef", gen.coef, "Comma-separated true coefficients")
      ->required()
      ->delimiter(',');
  gen_cmd->add_option("--noise", gen.noise, "Noise standard deviation")->required();
  gen_cmd->add_option("--seed", gen.seed, "PRNG seed")->required();
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->required();

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Print per-feature scores of one technique");
  score_cmd->add_option("--data", score.data, "Input CSV")->required();
  score_cmd->add_option("--target", score.target, "Target column")->required();
  score_cmd->add_option("--method", score.method, "f-regression | mutual-info | chi2 | rfe | pca")
      ->required()
      ->check(CLI::IsMember(score_methods()));
  score_cmd->add_option("--k", score.k, "RFE features to keep / PCA components");
  score_cmd->add_option("--bins", score.bins, "Bins for mutual-info and chi2");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    CLI::App* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    return kUsageFailure;
  }

  if (run_cmd->parsed()) return cmd_run(run, out, err);
  if (gen_cmd->parsed()) return cmd_generate(gen, out, err);
  return cmd_score(score, out, err);
}

}  // namespace fsbench::cli
