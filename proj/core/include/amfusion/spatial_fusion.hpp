#pragma once

#include "amfusion/layers.hpp"

namespace amfusion {

/// CBAM-style channel gate: sigmoid(MLP(avgpool) + MLP(maxpool)) with a shared
/// two-layer 1x1 bottleneck of reduction 4.
struct ChannelAttention {
  ChannelAttention() = default;
  ChannelAttention(int channels, Rng& rng);

  /// Nx C x1x1 gate in (0,1).
  Var gate(const Var& feat) const;
  void collect(ParameterList& out, const std::string& prefix);

  Conv2d reduce;
  Conv2d expand;
};

/// 7x7 convolution over a stack of channel-wise mean/max maps, sigmoid gated.
struct SpatialAttention {
  SpatialAttention() = default;
  SpatialAttention(int stack_channels, Rng& rng);

  Var weight(const Var& stack) const;
  void collect(ParameterList& out, const std::string& prefix);

  Conv2d conv;
};

/// Illumination-guided detail fusion parameters for one spatial level.
struct IdfmParams {
  ChannelAttention cam_visible;
  ChannelAttention cam_infrared;
  SpatialAttention sam;

  static IdfmParams init(int channels, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Plain CBAM over the concatenated branches followed by a 1x1 merge. Used
/// when the illumination-guided module is ablated.
struct CbamFusionParams {
  ChannelAttention cam;
  SpatialAttention sam;
  Conv2d merge;

  static CbamFusionParams init(int channels, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

struct SpatialFusion {
  Var fused;
  Var weight;  // Nx1xHxW, visible-branch weight w
};

/// F^c = gate(feat) * feat, gate broadcast over H and W.
Var channel_attend(const Var& feat, const ChannelAttention& params);

/// F_fu = w (F^c_D + F_D) + (1 - w)(F^c_G + F_G). Throws BadShape when the two
/// inputs differ in shape or do not match the parameters' width.
SpatialFusion fuse_spatial(const Var& visible, const Var& infrared, const IdfmParams& params);

SpatialFusion fuse_spatial_cbam(const Var& visible, const Var& infrared, const CbamFusionParams& params);

}  // namespace amfusion
