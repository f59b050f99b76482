#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amfusion {

enum class ErrorKind {
  FileNotFound,
  DecodeError,
  DimensionMismatch,
  DimensionNotDivisible,
  CropTooLarge,
  BadShape,
  ShapeMismatch,
  HeadDivisibility,
  PatchMismatch,
  TooSmall,
  InvalidConfig,
  EmptyDataset,
  NonFiniteLoss,
  BadCheckpoint,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so that
/// callers (and tests) can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace amfusion
