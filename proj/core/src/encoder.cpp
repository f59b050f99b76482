#include "amfusion/encoder.hpp"

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

DenseBlock::DenseBlock(int channels, Rng& rng) {
  const int growth = std::max(1, channels / 2);
  for (int i = 0; i < 3; ++i) layers[i] = Conv2d(channels + i * growth, growth, 3, 1, 1, rng);
  project = Conv2d(channels + 3 * growth, channels, 1, 1, 0, rng);
}

Var DenseBlock::operator()(const Var& x) const {
  std::vector<Var> features{x};
  for (const Conv2d& conv : layers) {
    const Var in = features.size() == 1 ? features.front() : ops::concat_channels(features);
    features.push_back(ops::leaky_relu(conv(in), kLeakySlope));
  }
  return ops::leaky_relu(project(ops::concat_channels(features)), kLeakySlope);
}

void DenseBlock::collect(ParameterList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + ".conv" + std::to_string(i));
  project.collect(out, prefix + ".project");
}

EncoderParams EncoderParams::init(const FusionConfig& config, int in_channels, Rng& rng) {
  EncoderParams p;
  int prev = in_channels;
  for (int level = 1; level <= kPyramidLevels; ++level) {
    const int c = config.channels(level);
    EncoderLevel l;
    l.entry = Conv2d(prev, c, 3, 1, 1, rng);
    l.dense = DenseBlock(c, rng);
    if (level < kPyramidLevels) l.down = Conv2d(c, c, 3, 2, 1, rng);
    p.levels.push_back(std::move(l));
    prev = c;
  }
  return p;
}

void EncoderParams::collect(ParameterList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string base = prefix + ".level" + std::to_string(i + 1);
    levels[i].entry.collect(out, base + ".entry");
    levels[i].dense.collect(out, base + ".dense");
    if (levels[i].down) levels[i].down->collect(out, base + ".down");
  }
}

FeaturePyramid extract(const Var& image, const EncoderParams& params) {
  const Shape s = image.shape();
  if (params.levels.size() != kPyramidLevels) {
    throw Error(ErrorKind::BadShape, "encoder must have 5 levels");
  }
  if (s.c != params.levels.front().entry.in_channels() || s.h % kSpatialMultiple != 0 ||
      s.w % kSpatialMultiple != 0 || s.h == 0 || s.w == 0) {
    throw Error(ErrorKind::BadShape, "encoder input " + s.str() + " must be Nx" +
                                         std::to_string(params.levels.front().entry.in_channels()) +
                                         "xHxW with H, W multiples of 16");
  }
  FeaturePyramid pyramid;
  Var x = image;
  for (int i = 0; i < kPyramidLevels; ++i) {
    const EncoderLevel& level = params.levels[i];
    const Var entry = ops::leaky_relu(level.entry(x), kLeakySlope);
    pyramid.levels[i] = level.dense(entry);
    if (level.down) x = ops::leaky_relu((*level.down)(pyramid.levels[i]), kLeakySlope);
  }
  return pyramid;
}

MultiScaleEncoder MultiScaleEncoder::init(const FusionConfig& config, Rng& rng) {
  MultiScaleEncoder e;
  e.visible = EncoderParams::init(config, 1, rng);
  e.infrared = EncoderParams::init(config, 1, rng);
  return e;
}

FeaturePyramid MultiScaleEncoder::extract(const Var& image, Branch branch) const {
  return amfusion::extract(image, branch == Branch::Visible ? visible : infrared);
}

void MultiScaleEncoder::collect(ParameterList& out, const std::string& prefix) {
  visible.collect(out, prefix + ".visible");
  infrared.collect(out, prefix + ".infrared");
}

}  // namespace amfusion
