#include "amfusion/model.hpp"

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

namespace {

std::unique_ptr<DetectionProvider> build_detector(const FusionConfig& config, Rng& rng, bool load_external) {
  if (!config.use_detection_features) return std::make_unique<NullProvider>(config);
  if (!load_external && config.detector.rfind("external:", 0) == 0) {
    return std::make_unique<TinyBackbone>(config, rng, config.detector);
  }
  return make_provider(config, rng);
}

}  // namespace

Var luminance(const Var& rgb) {
  if (rgb.shape().c != 3) throw Error(ErrorKind::BadShape, "luminance expects 3 channels, got " + rgb.shape().str());
  static const Var weight = Var::constant(Tensor(Shape{1, 3, 1, 1}, {0.299, 0.587, 0.114}));
  return ops::conv2d(rgb, weight, Var(), 1, 0);
}

FusionModel::FusionModel(const FusionConfig& config, bool load_external) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  encoder_ = MultiScaleEncoder::init(config_, rng);
  for (int level = 1; level <= 3; ++level) {
    if (config_.use_idfm) {
      idfm_.push_back(IdfmParams::init(config_.channels(level), rng));
    } else {
      cbam_.push_back(CbamFusionParams::init(config_.channels(level), rng));
    }
  }
  for (int level = 4; level <= 5; ++level) {
    if (config_.use_dsfm) {
      dsfm_.push_back(DsfmParams::init(config_.channels(level), config_.heads, rng));
    } else {
      self_.push_back(SelfAttentionFusionParams::init(config_.channels(level), config_.heads, rng));
    }
  }
  // Separate stream so the fusion weights do not depend on the detector kind.
  Rng detector_rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
  detector_ = build_detector(config_, detector_rng, load_external);
  mrm_ = MrmParams::init(config_, rng);
}

FusionModel::FusionModel(const FusionModel& other)
    : config_(other.config_),
      encoder_(other.encoder_),
      idfm_(other.idfm_),
      cbam_(other.cbam_),
      dsfm_(other.dsfm_),
      self_(other.self_),
      detector_(other.detector_->clone()),
      mrm_(other.mrm_) {}

FusionModel& FusionModel::operator=(const FusionModel& other) {
  if (this != &other) *this = FusionModel(other);
  return *this;
}

FusionOutput FusionModel::forward(const Var& visible, const Var& infrared, AttentionTrace* trace) const {
  const Var visible_y = luminance(visible);
  const FeaturePyramid fv = encoder_.extract(visible_y, Branch::Visible);
  const FeaturePyramid fi = encoder_.extract(infrared, Branch::Infrared);

  FusionOutput out;
  std::array<Var, kPyramidLevels> fused;
  for (int level = 1; level <= 3; ++level) {
    const SpatialFusion sf = config_.use_idfm ? fuse_spatial(fv.level(level), fi.level(level), idfm_[level - 1])
                                              : fuse_spatial_cbam(fv.level(level), fi.level(level), cbam_[level - 1]);
    fused[level - 1] = sf.fused;
    out.weights[level - 1] = sf.weight;
  }

  if (config_.use_dsfm) {
    const bool guided = detector_->informative();
    DetectionFeatures det;
    if (guided) det = detector_->features(visible, infrared);
    for (int level = 4; level <= 5; ++level) {
      const DsfmParams& p = dsfm_[level - 4];
      fused[level - 1] = guided ? fuse_semantic(fv.level(level), fi.level(level), det.level(level), p, trace)
                                : fuse_semantic_self(fv.level(level), fi.level(level), p, trace);
    }
  } else {
    for (int level = 4; level <= 5; ++level) {
      fused[level - 1] = fuse_semantic_baseline(fv.level(level), fi.level(level), self_[level - 4], trace);
    }
  }

  const MergedFeatures merged = merge_pyramid(fused, mrm_);
  out.fused = config_.use_srm ? rectify_and_render(merged.spatial, merged.semantic, mrm_)
                              : render_additive(merged.spatial, merged.semantic, mrm_);
  return out;
}

Tensor FusionModel::fuse_luminance(const ImagePair& pair) const {
  pair.validate();
  NoGradGuard no_grad;
  return forward(Var::constant(pair.visible), Var::constant(pair.infrared)).fused.value();
}

Tensor FusionModel::fuse(const ImagePair& pair) const {
  return recompose_color(fuse_luminance(pair), pair.visible);
}

ParameterList FusionModel::parameters() {
  ParameterList out;
  encoder_.collect(out, "encoder");
  for (std::size_t i = 0; i < idfm_.size(); ++i) idfm_[i].collect(out, "idfm" + std::to_string(i + 1));
  for (std::size_t i = 0; i < cbam_.size(); ++i) cbam_[i].collect(out, "cbam" + std::to_string(i + 1));
  for (std::size_t i = 0; i < dsfm_.size(); ++i) dsfm_[i].collect(out, "dsfm" + std::to_string(i + 4));
  for (std::size_t i = 0; i < self_.size(); ++i) self_[i].collect(out, "selfattn" + std::to_string(i + 4));
  detector_->collect(out, "detector");
  mrm_.collect(out, "mrm");
  return out;
}

ParameterList FusionModel::detector_parameters() {
  ParameterList out;
  detector_->collect(out, "detector");
  return out;
}

}  // namespace amfusion
