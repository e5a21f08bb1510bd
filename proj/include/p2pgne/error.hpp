#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace p2pgne {

enum class ErrorCode {
  DisconnectedGraph,
  RowSumMismatch,
  NonPositiveSelfWeight,
  InvalidEdge,
  SpectrumFailure,
  EmptyHorizon,
  StepOutOfRange,
  DimensionMismatch,
  TimeOutOfRange,
  InvalidProsumer,
  EmptyFeasibleSet,
  MissingNeighborMessage,
  InfeasibleSoC,
  Infeasible,
  IterationCap,
  TooLarge,
  UnboundedSet,
  LengthMismatch,
  InsufficientData,
  ParseError,
  SchemaVersion,
  ValidationError,
  BadSpec,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::RowSumMismatch: return "RowSumMismatch";
    case ErrorCode::NonPositiveSelfWeight: return "NonPositiveSelfWeight";
    case ErrorCode::InvalidEdge: return "InvalidEdge";
    case ErrorCode::SpectrumFailure: return "SpectrumFailure";
    case ErrorCode::EmptyHorizon: return "EmptyHorizon";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::InvalidProsumer: return "InvalidProsumer";
    case ErrorCode::EmptyFeasibleSet: return "EmptyFeasibleSet";
    case ErrorCode::MissingNeighborMessage: return "MissingNeighborMessage";
    case ErrorCode::InfeasibleSoC: return "InfeasibleSoC";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::IterationCap: return "IterationCap";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::UnboundedSet: return "UnboundedSet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersion: return "SchemaVersion";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. The code is the
/// stable, machine-readable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by scenario validation; carries every violation found, not only the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : Error(ErrorCode::ValidationError, join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += "; ";
      out += item;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

/// Shortest round-trip decimal form, for messages.
inline std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace p2pgne
