#pragma once

#include <filesystem>

#include "amfusion/tensor.hpp"

namespace amfusion {

/// Decodes an 8-bit (or 16-bit, reduced to 8) PNG into a 1xCxHxW tensor with
/// values k/255. Gray images yield C=1, colour images C=3; alpha is dropped.
Tensor read_png(const std::filesystem::path& path);

/// Writes a 1x1xHxW or 1x3xHxW tensor as an 8-bit PNG using round(255*clamp(v)).
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace amfusion
