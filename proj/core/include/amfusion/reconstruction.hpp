#pragma once

#include <array>

#include "amfusion/datamodel.hpp"
#include "amfusion/layers.hpp"

namespace amfusion {

/// Two heads of two 3x3 convolutions each (ReLU between), producing the
/// multiplicative weight and additive bias that rectify the spatial stream.
struct SrmParams {
  Conv2d weight_in;
  Conv2d weight_out;
  Conv2d bias_in;
  Conv2d bias_out;

  static SrmParams init(int channels, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Bottom-up merging blocks plus the rectification and 1x1 render head.
struct MrmParams {
  // Semantic stream: level 5 -> 4, then lifted to level-1 resolution.
  Conv2d semantic_reduce5;  // C5 -> C4
  Conv2d semantic_merge4;   // 2*C4 -> C4
  Conv2d semantic_lift;     // C4 -> C1
  // Spatial stream: level 3 -> 2 -> 1.
  Conv2d spatial_reduce3;  // C3 -> C2
  Conv2d spatial_merge2;   // 2*C2 -> C2
  Conv2d spatial_reduce2;  // C2 -> C1
  Conv2d spatial_merge1;   // 2*C1 -> C1
  SrmParams srm;
  Conv2d render;  // C1 -> 1, 1x1

  static MrmParams init(const FusionConfig& config, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

struct MergedFeatures {
  Var spatial;   // F^sp_O', N x C1 x H x W
  Var semantic;  // F^se_O', N x C1 x H x W
};

struct Rectification {
  Var weight;  // w_se
  Var bias;    // b_se
};

/// Throws BadShape unless the five levels follow the pyramid shape contract.
MergedFeatures merge_pyramid(const std::array<Var, kPyramidLevels>& fused, const MrmParams& params);

Rectification semantic_rectify(const Var& semantic, const SrmParams& params);

/// sigmoid(render(w_se * spatial + b_se)).
Var render_rectified(const Var& spatial, const Rectification& rect, const Conv2d& render);

/// Full rectification: SRM on the semantic stream, then render.
Var rectify_and_render(const Var& spatial, const Var& semantic, const MrmParams& params);

/// Ablated variant: the semantic stream is added to the spatial one.
Var render_additive(const Var& spatial, const Var& semantic, const MrmParams& params);

/// Replaces the luminance of `visible` (Nx3xHxW) with `fused_y` (Nx1xHxW),
/// keeps its chroma and clamps the RGB result to [0,1].
Tensor recompose_color(const Tensor& fused_y, const Tensor& visible);

}  // namespace amfusion
