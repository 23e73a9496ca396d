#pragma once

// Results table, results JSON, feature-importance SVG, and the CSV writer.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsbench/data.hpp"
#include "fsbench/error.hpp"
#include "fsbench/eval.hpp"

namespace fsbench {

using NamedValues = std::vector<std::pair<std::string, double>>;

/// One (selector ensemble, regressor) cell of the results table.
struct ExperimentResult {
  std::string selector_label;
  std::string regressor_label;
  CvSummary cv;
  double test_rmse = 0.0;
  double r_squared = 0.0;
  std::vector<std::string> selected_feature_names;
  std::optional<NamedValues> importances;
};

enum class TableFormat { Markdown, Csv };

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string markdown_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Shortest decimal that reads back to the same double.
inline std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Renders one row per result, grouped by selector label in first-appearance order.
inline std::string render_table(const std::vector<ExperimentResult>& results, TableFormat format) {
  require(!results.empty(), Errc::EmptyReport, "no results to render");
  std::vector<std::string> groups;
  for (const auto& r : results)
    if (std::find(groups.begin(), groups.end(), r.selector_label) == groups.end())
      groups.push_back(r.selector_label);

  std::ostringstream out;
  if (format == TableFormat::Markdown) {
    out << "| Feature Selection Techniques | Regression Algorithm | CV RMSE | Test RMSE | R-squared |\n"
        << "|---|---|---|---|---|\n";
  } else {
    out << "selector,regressor,cv_rmse,test_rmse,r_squared\n";
  }
  for (const auto& group : groups) {
    for (const auto& r : results) {
      if (r.selector_label != group) continue;
      const std::string cells[] = {r.selector_label, r.regressor_label, format_cv(r.cv),
                                   format_fixed2(r.test_rmse), format_fixed2(r.r_squared)};
      if (format == TableFormat::Markdown) {
        out << '|';
        for (const auto& c : cells) out << ' ' << detail::markdown_cell(c) << " |";
      } else {
        for (std::size_t i = 0; i < std::size(cells); ++i)
          out << (i ? "," : "") << detail::csv_quote(cells[i]);
      }
      out << '\n';
    }
  }
  return out.str();
}

struct ChartLayout {
  static constexpr double kWidth = 800.0;
  static constexpr double kRowHeight = 40.0;
  static constexpr double kLabelWidth = 230.0;
  static constexpr double kBarMax = 490.0;
  static constexpr double kBarHeight = 24.0;
};

/// Horizontal bar chart, bars sorted by descending importance, longest bar spanning
/// the full bar area. Canvas is 800 x 40*d.
inline std::string render_importance_chart(const NamedValues& importances,
                                           const std::string& title = "Feature Importance") {
  require(!importances.empty(), Errc::ChartError, "no importances to plot");
  for (const auto& [name, value] : importances)
    require(std::isfinite(value) && value >= 0.0, Errc::ChartError,
            "importance of '" + name + "' must be finite and non-negative");

  NamedValues sorted = importances;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const double peak = sorted.front().second;
  const double scale = peak > 0.0 ? ChartLayout::kBarMax / peak : 0.0;
  const double height = ChartLayout::kRowHeight * static_cast<double>(sorted.size());

  auto px = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\""
      << px(height) << "\" viewBox=\"0 0 800 " << px(height) << "\">\n"
      << "<title>" << detail::xml_escape(title) << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"" << px(height) << "\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& [name, value] = sorted[i];
    const double top = ChartLayout::kRowHeight * static_cast<double>(i);
    const double bar_y = top + (ChartLayout::kRowHeight - ChartLayout::kBarHeight) / 2.0;
    const double text_y = top + ChartLayout::kRowHeight / 2.0 + 5.0;
    const double length = value * scale;
    svg << "<text x=\"" << px(ChartLayout::kLabelWidth - 10.0) << "\" y=\"" << px(text_y)
        << "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"end\">"
        << detail::xml_escape(name) << "</text>\n"
        << "<rect class=\"bar\" x=\"" << px(ChartLayout::kLabelWidth) << "\" y=\"" << px(bar_y)
        << "\" width=\"" << px(length) << "\" height=\"" << px(ChartLayout::kBarHeight)
        << "\" fill=\"#4c72b0\"/>\n"
        << "<text x=\"" << px(ChartLayout::kLabelWidth + length + 6.0) << "\" y=\"" << px(text_y)
        << "\" font-family=\"sans-serif\" font-size=\"13\">" << format_fixed2(value)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

struct ResultsMetadata {
  std::int64_t seed = 0;
  std::string config_digest;
  std::string timestamp;
};

inline nlohmann::json results_to_json(const std::vector<ExperimentResult>& results,
                                      const ResultsMetadata& meta) {
  nlohmann::json doc;
  doc["metadata"] = {{"seed", meta.seed},
                     {"config_digest", meta.config_digest},
                     {"timestamp", meta.timestamp}};
  doc["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json row{{"selector", r.selector_label},
                       {"regressor", r.regressor_label},
                       {"cv_rmse_mean", r.cv.mean},
                       {"cv_rmse_std", r.cv.std},
                       {"fold_rmse", r.cv.fold_rmse},
                       {"test_rmse", r.test_rmse},
                       {"r_squared", r.r_squared},
                       {"selected_features", r.selected_feature_names},
                       {"importances", nullptr}};
    if (r.importances) {
      nlohmann::json imp = nlohmann::json::object();
      for (const auto& [name, value] : *r.importances) imp[name] = value;
      row["importances"] = std::move(imp);
    }
    doc["results"].push_back(std::move(row));
  }
  return doc;
}

inline std::string dump_results_json(const std::vector<ExperimentResult>& results,
                                     const ResultsMetadata& meta) {
  return results_to_json(results, meta).dump(2) + "\n";
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::IoError, "cannot write '" + path + "'");
  out << text;
  out.flush();
  require(out.good(), Errc::IoError, "write to '" + path + "' failed");
}

inline void write_results_json(const std::string& path, const std::vector<ExperimentResult>& results,
                               const ResultsMetadata& meta) {
  write_text_file(path, dump_results_json(results, meta));
}

inline std::pair<std::vector<ExperimentResult>, ResultsMetadata> parse_results_json(
    const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("results JSON: ") + e.what());
  }
  try {
    ResultsMetadata meta{doc.at("metadata").at("seed").get<std::int64_t>(),
                         doc.at("metadata").at("config_digest").get<std::string>(),
                         doc.at("metadata").at("timestamp").get<std::string>()};
    std::vector<ExperimentResult> results;
    for (const auto& row : doc.at("results")) {
      ExperimentResult r;
      r.selector_label = row.at("selector").get<std::string>();
      r.regressor_label = row.at("regressor").get<std::string>();
      r.cv.fold_rmse = row.at("fold_rmse").get<Vector>();
      r.cv.mean = row.at("cv_rmse_mean").get<double>();
      r.cv.std = row.at("cv_rmse_std").get<double>();
      r.test_rmse = row.at("test_rmse").get<double>();
      r.r_squared = row.at("r_squared").get<double>();
      r.selected_feature_names = row.at("selected_features").get<std::vector<std::string>>();
      if (!row.at("importances").is_null()) {
        NamedValues imp;
        for (const auto& [name, value] : row.at("importances").items())
          imp.emplace_back(name, value.get<double>());
        r.importances = std::move(imp);
      }
      results.push_back(std::move(r));
    }
    return {std::move(results), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string("results JSON: ") + e.what());
  }
}

inline std::pair<std::vector<ExperimentResult>, ResultsMetadata> read_results_json(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoError, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_results_json(buf.str());
}

/// Writes features in order followed by the target column, numbers in shortest
/// round-trip form, so load_csv reads back the identical dataset.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (const auto& name : ds.feature_names()) out << name << ',';
  out << ds.target_name() << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (double v : ds.features().row(i)) out << detail::shortest(v) << ',';
    out << detail::shortest(ds.target()[i]) << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ostringstream buf;
  write_csv(buf, ds);
  write_text_file(path, buf.str());
}

}  // namespace fsbench
