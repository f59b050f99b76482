#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "amfusion/tensor.hpp"

namespace amfusion {

/// Every spatial extent must survive four halvings.
constexpr int kSpatialMultiple = 16;
constexpr int kPyramidLevels = 5;

/// Architecture and objective hyperparameters plus ablation switches.
struct FusionConfig {
  int base_channels = 16;
  double sigma = 0.2;           // illumination-weight width
  double eta = 0.75;            // exposure term weight inside the illumination loss
  double alpha = 1.5;           // structure (SSIM) loss weight
  double beta = 2.0;            // illumination loss weight
  double exposure_level = 0.6;  // well-exposedness target E
  int exposure_patch = 16;
  int heads = 4;

  bool use_idfm = true;
  bool use_dsfm = true;
  bool use_srm = true;
  bool use_detection_features = true;
  bool use_ill_loss = true;
  bool use_int_ill = true;
  bool use_exp = true;
  bool use_grad = true;
  bool use_ssim = true;

  /// "tiny", "null" or "external:<path>".
  std::string detector = "tiny";
  std::uint64_t seed = 0;

  /// Channel width of pyramid level `level` (1-based): base_channels * 2^(level-1).
  int channels(int level) const { return base_channels << (level - 1); }

  /// Throws InvalidConfig or HeadDivisibility.
  void validate() const;
};

/// Parses `key = value` lines (blank lines and '#' comments ignored) onto the
/// defaults. Unknown keys and malformed values raise InvalidConfig.
FusionConfig parse_config(const std::string& text);
FusionConfig load_config(const std::filesystem::path& path);
std::string format_config(const FusionConfig& config);

struct LossReport {
  double grad = 0.0;
  double ssim = 0.0;
  double int_ill = 0.0;
  double exp = 0.0;
  double total = 0.0;
};

struct MetricReport {
  double en = 0.0;
  double mi = 0.0;
  double sd = 0.0;
};

/// Registered visible (1x3xHxW) and infrared (1x1xHxW) images in [0,1].
struct ImagePair {
  Tensor visible;
  Tensor infrared;
  std::string id;

  int height() const { return visible.shape().h; }
  int width() const { return visible.shape().w; }

  /// Throws DimensionMismatch, DimensionNotDivisible or BadShape.
  void validate() const;
};

/// Loads two 8-bit PNGs, collapsing an RGB infrared image to luminance.
/// Mismatched or non-multiple-of-16 dimensions are errors.
ImagePair load_image_pair(const std::filesystem::path& visible_path,
                          const std::filesystem::path& infrared_path, std::string id = {});

/// Same crop window on both modalities, drawn from `seed`.
ImagePair random_crop(const ImagePair& pair, int size, std::uint64_t seed);

/// Y = 0.299 R + 0.587 G + 0.114 B for an Nx3xHxW tensor.
Tensor to_luminance(const Tensor& rgb);

/// Full-range BT.601 YCbCr with chroma offset 0.5.
Tensor rgb_to_ycbcr(const Tensor& rgb);
Tensor ycbcr_to_rgb(const Tensor& ycbcr);

}  // namespace amfusion
