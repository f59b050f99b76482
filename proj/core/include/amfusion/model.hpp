#pragma once

#include <array>
#include <memory>
#include <vector>

#include "amfusion/detection.hpp"
#include "amfusion/encoder.hpp"
#include "amfusion/reconstruction.hpp"
#include "amfusion/semantic_fusion.hpp"
#include "amfusion/spatial_fusion.hpp"

namespace amfusion {

struct FusionOutput {
  Var fused;                    // O', Nx1xHxW in (0,1)
  std::array<Var, 3> weights;   // visible-branch weight per spatial level
};

/// The whole network: two encoders, spatial fusion at levels 1-3, semantic
/// fusion at levels 4-5, reconstruction. Which fusion blocks exist depends on
/// the ablation switches of the config.
class FusionModel {
 public:
  /// Parameters are drawn from config.seed. With `load_external` false an
  /// "external:" detector is created with fresh weights instead of reading its
  /// file (used when the weights come from a checkpoint).
  explicit FusionModel(const FusionConfig& config, bool load_external = true);
  FusionModel(const FusionModel& other);
  FusionModel& operator=(const FusionModel& other);
  FusionModel(FusionModel&&) noexcept = default;
  FusionModel& operator=(FusionModel&&) noexcept = default;

  /// visible is Nx3xHxW RGB, infrared Nx1xHxW. The visible branch sees the
  /// luminance of `visible`.
  FusionOutput forward(const Var& visible, const Var& infrared, AttentionTrace* trace = nullptr) const;

  /// Inference on one pair: fused luminance recombined with the visible chroma.
  Tensor fuse(const ImagePair& pair) const;
  /// Inference returning only the fused luminance (1x1xHxW).
  Tensor fuse_luminance(const ImagePair& pair) const;

  ParameterList parameters();
  ParameterList detector_parameters();

  const FusionConfig& config() const { return config_; }
  DetectionProvider& detector() { return *detector_; }
  const DetectionProvider& detector() const { return *detector_; }

 private:
  FusionConfig config_;
  MultiScaleEncoder encoder_;
  std::vector<IdfmParams> idfm_;                 // levels 1-3 when use_idfm
  std::vector<CbamFusionParams> cbam_;           // levels 1-3 otherwise
  std::vector<DsfmParams> dsfm_;                 // levels 4-5 when use_dsfm
  std::vector<SelfAttentionFusionParams> self_;  // levels 4-5 otherwise
  std::unique_ptr<DetectionProvider> detector_;
  MrmParams mrm_;
};

/// Differentiable Y = 0.299 R + 0.587 G + 0.114 B.
Var luminance(const Var& rgb);

}  // namespace amfusion
