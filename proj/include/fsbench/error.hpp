#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsbench {

enum class Errc {
  InsufficientRows,
  ShapeError,
  NotSymmetric,
  NoConvergence,
  RankDeficient,
  IoError,
  SchemaError,
  ParseError,
  SplitError,
  FoldError,
  DegenerateTarget,
  InsufficientSamples,
  ParamError,
  StrategyError,
  EmptyReport,
  ChartError,
  ConfigError,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InsufficientRows: return "InsufficientRows";
    case Errc::ShapeError: return "ShapeError";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::IoError: return "IoError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::ParseError: return "ParseError";
    case Errc::SplitError: return "SplitError";
    case Errc::FoldError: return "FoldError";
    case Errc::DegenerateTarget: return "DegenerateTarget";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::ParamError: return "ParamError";
    case Errc::StrategyError: return "StrategyError";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::ChartError: return "ChartError";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error tagged with an Errc.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised by NoConvergence paths that know how far they got.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations)
      : Error(Errc::NoConvergence, what + " after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}

  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

/// Raised by CSV parsing; row and column are 1-based as a user sees them in a text editor.
class ParseFailure : public Error {
 public:
  ParseFailure(std::size_t row, std::size_t column, const std::string& what)
      : Error(Errc::ParseError, "row " + std::to_string(row) + ", column " +
                                    std::to_string(column) + ": " + what),
        row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace fsbench
