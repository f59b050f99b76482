#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "amfusion/autograd.hpp"

namespace amfusion {

/// Single-file, self-describing container of named float64 tensors.
///
/// Layout: 8-byte magic "AMFCKPT\0", little-endian u32 format version, u64
/// header length, a JSON header {meta, tensors:[{name, shape, offset}],
/// payload_doubles}, then the raw little-endian doubles.
struct TensorArchive {
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
/// Throws FileNotFound or BadCheckpoint (bad magic, unknown version, truncation).
TensorArchive read_archive(const std::filesystem::path& path);

void write_tensor_archive(const std::filesystem::path& path, const ParameterList& params, nlohmann::json meta);
/// Assigns every listed parameter from the archive; a missing name or a shape
/// mismatch raises BadCheckpoint. Returns the archive's meta block.
nlohmann::json read_tensor_archive(const std::filesystem::path& path, ParameterList& params);

/// Copies values from `archive` into `params` (same rules as above).
void assign_parameters(const TensorArchive& archive, ParameterList& params);

}  // namespace amfusion
