#include "amfusion/spatial_fusion.hpp"

#include <algorithm>

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

ChannelAttention::ChannelAttention(int channels, Rng& rng) {
  const int hidden = std::max(1, channels / 4);
  reduce = Conv2d(channels, hidden, 1, 1, 0, rng);
  expand = Conv2d(hidden, channels, 1, 1, 0, rng);
}

Var ChannelAttention::gate(const Var& feat) const {
  auto mlp = [this](const Var& pooled) { return expand(ops::relu(reduce(pooled))); };
  return ops::sigmoid(ops::add(mlp(ops::global_avg_pool(feat)), mlp(ops::global_max_pool(feat))));
}

void ChannelAttention::collect(ParameterList& out, const std::string& prefix) {
  reduce.collect(out, prefix + ".reduce");
  expand.collect(out, prefix + ".expand");
}

SpatialAttention::SpatialAttention(int stack_channels, Rng& rng)
    : conv(stack_channels, 1, 7, 1, 3, rng) {}

Var SpatialAttention::weight(const Var& stack) const { return ops::sigmoid(conv(stack)); }

void SpatialAttention::collect(ParameterList& out, const std::string& prefix) {
  conv.collect(out, prefix + ".conv");
}

IdfmParams IdfmParams::init(int channels, Rng& rng) {
  IdfmParams p;
  p.cam_visible = ChannelAttention(channels, rng);
  p.cam_infrared = ChannelAttention(channels, rng);
  p.sam = SpatialAttention(4, rng);
  return p;
}

void IdfmParams::collect(ParameterList& out, const std::string& prefix) {
  cam_visible.collect(out, prefix + ".cam_visible");
  cam_infrared.collect(out, prefix + ".cam_infrared");
  sam.collect(out, prefix + ".sam");
}

CbamFusionParams CbamFusionParams::init(int channels, Rng& rng) {
  CbamFusionParams p;
  p.cam = ChannelAttention(2 * channels, rng);
  p.sam = SpatialAttention(2, rng);
  p.merge = Conv2d(2 * channels, channels, 1, 1, 0, rng);
  return p;
}

void CbamFusionParams::collect(ParameterList& out, const std::string& prefix) {
  cam.collect(out, prefix + ".cam");
  sam.collect(out, prefix + ".sam");
  merge.collect(out, prefix + ".merge");
}

namespace {

void check_pair(const Var& a, const Var& b, int channels) {
  if (!(a.shape() == b.shape()) || a.shape().c != channels) {
    throw Error(ErrorKind::BadShape, "spatial fusion inputs " + a.shape().str() + " and " + b.shape().str() +
                                         " must match and have " + std::to_string(channels) + " channels");
  }
}

}  // namespace

Var channel_attend(const Var& feat, const ChannelAttention& params) {
  if (feat.shape().c != params.reduce.in_channels()) {
    throw Error(ErrorKind::BadShape, "channel attention expects " + std::to_string(params.reduce.in_channels()) +
                                         " channels, got " + feat.shape().str());
  }
  return ops::mul(params.gate(feat), feat);
}

SpatialFusion fuse_spatial(const Var& visible, const Var& infrared, const IdfmParams& params) {
  check_pair(visible, infrared, params.cam_visible.reduce.in_channels());
  const Var reinforced_vis = channel_attend(visible, params.cam_visible);
  const Var reinforced_ir = channel_attend(infrared, params.cam_infrared);
  const Var stack = ops::concat_channels({ops::channel_mean(reinforced_vis), ops::channel_max(reinforced_vis),
                                          ops::channel_mean(reinforced_ir), ops::channel_max(reinforced_ir)});
  const Var w = params.sam.weight(stack);
  const Var stream_vis = ops::add(reinforced_vis, visible);
  const Var stream_ir = ops::add(reinforced_ir, infrared);
  const Var fused = ops::add(ops::mul(w, stream_vis), ops::mul(ops::one_minus(w), stream_ir));
  return {fused, w};
}

SpatialFusion fuse_spatial_cbam(const Var& visible, const Var& infrared, const CbamFusionParams& params) {
  check_pair(visible, infrared, params.merge.out_channels());
  const Var cat = ops::concat_channels({visible, infrared});
  const Var reinforced = ops::mul(params.cam.gate(cat), cat);
  const Var w = params.sam.weight(
      ops::concat_channels({ops::channel_mean(reinforced), ops::channel_max(reinforced)}));
  return {params.merge(ops::mul(w, reinforced)), w};
}

}  // namespace amfusion
