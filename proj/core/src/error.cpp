#include "amfusion/error.hpp"

namespace amfusion {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DimensionNotDivisible: return "DimensionNotDivisible";
    case ErrorKind::CropTooLarge: return "CropTooLarge";
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::HeadDivisibility: return "HeadDivisibility";
    case ErrorKind::PatchMismatch: return "PatchMismatch";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace amfusion
