#pragma once

#include <array>
#include <optional>
#include <vector>

#include "amfusion/datamodel.hpp"
#include "amfusion/layers.hpp"

namespace amfusion {

/// Five feature maps; level i (1-based) is (H/2^(i-1)) x (W/2^(i-1)) x C_i.
/// Levels 1-3 are the spatial features, levels 4-5 the semantic ones.
struct FeaturePyramid {
  std::array<Var, kPyramidLevels> levels;

  const Var& level(int i) const { return levels[i - 1]; }
  static bool is_spatial(int i) { return i <= 3; }
};

/// Three 3x3 convolutions with concatenative skips, then a 1x1 projection
/// back to the block's input width.
struct DenseBlock {
  DenseBlock() = default;
  DenseBlock(int channels, Rng& rng);

  Var operator()(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix);

  std::array<Conv2d, 3> layers;
  Conv2d project;
};

struct EncoderLevel {
  Conv2d entry;
  DenseBlock dense;
  std::optional<Conv2d> down;  // stride-2 conv to the next level; absent on level 5
};

struct EncoderParams {
  std::vector<EncoderLevel> levels;

  static EncoderParams init(const FusionConfig& config, int in_channels, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

enum class Branch { Visible, Infrared };

/// Multi-scale feature extraction for one modality. Throws BadShape unless the
/// input is Nx1xHxW with H and W divisible by 16.
FeaturePyramid extract(const Var& image, const EncoderParams& params);

/// The two non-shared extraction branches.
struct MultiScaleEncoder {
  EncoderParams visible;
  EncoderParams infrared;

  static MultiScaleEncoder init(const FusionConfig& config, Rng& rng);
  FeaturePyramid extract(const Var& image, Branch branch) const;
  void collect(ParameterList& out, const std::string& prefix);
};

}  // namespace amfusion
