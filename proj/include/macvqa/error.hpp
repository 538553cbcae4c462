#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace macvqa {

enum class ErrorKind {
  DimensionMismatch,
  NonFinite,
  ZeroVector,
  DetachedNode,
  SimplexViolation,
  EmptyPool,
  KTooLarge,
  IndexOutOfRange,
  LambdaOutOfRange,
  TokenOutOfRange,
  ConfigInvalid,
  ParseError,
  ShapeMismatch,
  EmptyTestSet,
  IncompleteMatrix,
  SingleTask,
  Numerical,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DetachedNode: return "DetachedNode";
    case ErrorKind::SimplexViolation: return "SimplexViolation";
    case ErrorKind::EmptyPool: return "EmptyPool";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::LambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::IncompleteMatrix: return "IncompleteMatrix";
    case ErrorKind::SingleTask: return "SingleTask";
    case ErrorKind::Numerical: return "Numerical";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace macvqa
