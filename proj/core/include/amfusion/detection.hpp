#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "amfusion/datamodel.hpp"
#include "amfusion/layers.hpp"

namespace amfusion {

/// Detection features at the two semantic pyramid levels (H/8 and H/16),
/// projected to C_4 and C_5 channels.
struct DetectionFeatures {
  Var level4;
  Var level5;

  const Var& level(int i) const { return i == 4 ? level4 : level5; }
};

/// Source of detection features F_d. Implementations must emit finite maps
/// whose shapes depend only on the input extent and the configuration.
class DetectionProvider {
 public:
  virtual ~DetectionProvider() = default;

  /// visible is Nx3xHxW, infrared Nx1xHxW, H and W multiples of 16.
  virtual DetectionFeatures features(const Var& visible, const Var& infrared) const = 0;
  /// False for providers that carry no information (the w/o-D pathway).
  virtual bool informative() const = 0;
  virtual std::string kind() const = 0;
  virtual void collect(ParameterList& out, const std::string& prefix) = 0;
  virtual std::unique_ptr<DetectionProvider> clone() const = 0;

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen);

 protected:
  bool frozen_ = false;
};

/// Small five-stage strided CNN standing in for a pretrained detector
/// backbone. The stem adds a 1x1-projected infrared residual to a 3x3 RGB
/// convolution; stage 3 (H/8) and stage 5 (H/16) feed 1x1 projections.
class TinyBackbone final : public DetectionProvider {
 public:
  TinyBackbone(const FusionConfig& config, Rng& rng, std::string kind = "tiny");

  DetectionFeatures features(const Var& visible, const Var& infrared) const override;
  bool informative() const override { return true; }
  std::string kind() const override { return kind_; }
  void collect(ParameterList& out, const std::string& prefix) override;
  std::unique_ptr<DetectionProvider> clone() const override;

  static constexpr int kWidths[4] = {8, 16, 32, 64};

 private:
  Conv2d stem_rgb_;
  Conv2d stem_ir_;
  Conv2d stage2_;
  Conv2d stage3_;
  Conv2d stage4_;
  Conv2d stage5_;
  Conv2d project4_;
  Conv2d project5_;
  std::string kind_;
};

/// Emits all-zero maps of the correct shape.
class NullProvider final : public DetectionProvider {
 public:
  explicit NullProvider(const FusionConfig& config);

  DetectionFeatures features(const Var& visible, const Var& infrared) const override;
  bool informative() const override { return false; }
  std::string kind() const override { return "null"; }
  void collect(ParameterList&, const std::string&) override {}
  std::unique_ptr<DetectionProvider> clone() const override;

 private:
  int channels4_;
  int channels5_;
};

/// Builds the provider named by config.detector. "external:<path>" loads
/// TinyBackbone weights from a file written by save_detector_weights.
std::unique_ptr<DetectionProvider> make_provider(const FusionConfig& config, Rng& rng);

void save_detector_weights(const std::filesystem::path& path, DetectionProvider& provider);
void load_detector_weights(const std::filesystem::path& path, DetectionProvider& provider);

/// Disable / enable gradient flow into the provider's parameters. Idempotent.
DetectionProvider& freeze(DetectionProvider& provider);
DetectionProvider& unfreeze(DetectionProvider& provider);

}  // namespace amfusion
