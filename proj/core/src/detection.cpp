#include "amfusion/detection.hpp"

#include "amfusion/archive.hpp"
#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

void DetectionProvider::set_frozen(bool frozen) {
  frozen_ = frozen;
  ParameterList params;
  collect(params, "detector");
  for (auto& p : params) p.param->set_trainable(!frozen);
}

namespace {

void check_detector_input(const Var& visible, const Var& infrared) {
  const Shape v = visible.shape();
  const Shape g = infrared.shape();
  if (v.c != 3 || g.c != 1 || v.n != g.n || v.h != g.h || v.w != g.w || v.h % kSpatialMultiple != 0 ||
      v.w % kSpatialMultiple != 0) {
    throw Error(ErrorKind::BadShape, "detector input " + v.str() + " / " + g.str() +
                                         " must be Nx3xHxW and Nx1xHxW with H, W multiples of 16");
  }
}

}  // namespace

TinyBackbone::TinyBackbone(const FusionConfig& config, Rng& rng, std::string kind)
    : stem_rgb_(3, kWidths[0], 3, 2, 1, rng),
      stem_ir_(1, kWidths[0], 1, 2, 0, rng),
      stage2_(kWidths[0], kWidths[1], 3, 2, 1, rng),
      stage3_(kWidths[1], kWidths[2], 3, 2, 1, rng),
      stage4_(kWidths[2], kWidths[3], 3, 2, 1, rng),
      stage5_(kWidths[3], kWidths[3], 3, 1, 1, rng),
      project4_(kWidths[2], config.channels(4), 1, 1, 0, rng),
      project5_(kWidths[3], config.channels(5), 1, 1, 0, rng),
      kind_(std::move(kind)) {}

DetectionFeatures TinyBackbone::features(const Var& visible, const Var& infrared) const {
  check_detector_input(visible, infrared);
  auto act = [](const Var& x) { return ops::leaky_relu(x, kLeakySlope); };
  const Var s1 = act(ops::add(stem_rgb_(visible), stem_ir_(infrared)));
  const Var s2 = act(stage2_(s1));
  const Var s3 = act(stage3_(s2));
  const Var s4 = act(stage4_(s3));
  const Var s5 = act(stage5_(s4));
  return {project4_(s3), project5_(s5)};
}

void TinyBackbone::collect(ParameterList& out, const std::string& prefix) {
  stem_rgb_.collect(out, prefix + ".stem_rgb");
  stem_ir_.collect(out, prefix + ".stem_ir");
  stage2_.collect(out, prefix + ".stage2");
  stage3_.collect(out, prefix + ".stage3");
  stage4_.collect(out, prefix + ".stage4");
  stage5_.collect(out, prefix + ".stage5");
  project4_.collect(out, prefix + ".project4");
  project5_.collect(out, prefix + ".project5");
}

std::unique_ptr<DetectionProvider> TinyBackbone::clone() const { return std::make_unique<TinyBackbone>(*this); }

NullProvider::NullProvider(const FusionConfig& config)
    : channels4_(config.channels(4)), channels5_(config.channels(5)) {}

DetectionFeatures NullProvider::features(const Var& visible, const Var& infrared) const {
  check_detector_input(visible, infrared);
  const Shape s = visible.shape();
  return {Var::constant(Tensor(Shape{s.n, channels4_, s.h / 8, s.w / 8})),
          Var::constant(Tensor(Shape{s.n, channels5_, s.h / 16, s.w / 16}))};
}

std::unique_ptr<DetectionProvider> NullProvider::clone() const { return std::make_unique<NullProvider>(*this); }

std::unique_ptr<DetectionProvider> make_provider(const FusionConfig& config, Rng& rng) {
  if (config.detector == "null") return std::make_unique<NullProvider>(config);
  if (config.detector == "tiny") return std::make_unique<TinyBackbone>(config, rng);
  const std::string prefix = "external:";
  if (config.detector.rfind(prefix, 0) == 0) {
    auto provider = std::make_unique<TinyBackbone>(config, rng, config.detector);
    load_detector_weights(config.detector.substr(prefix.size()), *provider);
    return provider;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown detector '" + config.detector + "'");
}

void save_detector_weights(const std::filesystem::path& path, DetectionProvider& provider) {
  ParameterList params;
  provider.collect(params, "detector");
  write_tensor_archive(path, params, nlohmann::json{{"kind", "detector"}});
}

void load_detector_weights(const std::filesystem::path& path, DetectionProvider& provider) {
  ParameterList params;
  provider.collect(params, "detector");
  read_tensor_archive(path, params);
}

DetectionProvider& freeze(DetectionProvider& provider) {
  provider.set_frozen(true);
  return provider;
}

DetectionProvider& unfreeze(DetectionProvider& provider) {
  provider.set_frozen(false);
  return provider;
}

}  // namespace amfusion
