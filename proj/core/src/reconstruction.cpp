#include "amfusion/reconstruction.hpp"

#include <algorithm>

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

SrmParams SrmParams::init(int channels, Rng& rng) {
  SrmParams p{Conv2d(channels, channels, 3, 1, 1, rng), Conv2d(channels, channels, 3, 1, 1, rng),
              Conv2d(channels, channels, 3, 1, 1, rng), Conv2d(channels, channels, 3, 1, 1, rng)};
  // Output convs start at the identity rectification (w_se = 1, b_se = 0);
  // random heads would scramble the spatial stream before anything is learned.
  p.weight_out.weight.value().fill(0.0);
  p.weight_out.bias.value().fill(1.0);
  p.bias_out.weight.value().fill(0.0);
  return p;
}

void SrmParams::collect(ParameterList& out, const std::string& prefix) {
  weight_in.collect(out, prefix + ".weight_in");
  weight_out.collect(out, prefix + ".weight_out");
  bias_in.collect(out, prefix + ".bias_in");
  bias_out.collect(out, prefix + ".bias_out");
}

MrmParams MrmParams::init(const FusionConfig& config, Rng& rng) {
  const int c1 = config.channels(1);
  const int c2 = config.channels(2);
  const int c3 = config.channels(3);
  const int c4 = config.channels(4);
  const int c5 = config.channels(5);
  MrmParams p;
  p.semantic_reduce5 = Conv2d(c5, c4, 3, 1, 1, rng);
  p.semantic_merge4 = Conv2d(2 * c4, c4, 3, 1, 1, rng);
  p.semantic_lift = Conv2d(c4, c1, 3, 1, 1, rng);
  p.spatial_reduce3 = Conv2d(c3, c2, 3, 1, 1, rng);
  p.spatial_merge2 = Conv2d(2 * c2, c2, 3, 1, 1, rng);
  p.spatial_reduce2 = Conv2d(c2, c1, 3, 1, 1, rng);
  p.spatial_merge1 = Conv2d(2 * c1, c1, 3, 1, 1, rng);
  p.srm = SrmParams::init(c1, rng);
  p.render = Conv2d(c1, 1, 1, 1, 0, rng);
  return p;
}

void MrmParams::collect(ParameterList& out, const std::string& prefix) {
  semantic_reduce5.collect(out, prefix + ".semantic_reduce5");
  semantic_merge4.collect(out, prefix + ".semantic_merge4");
  semantic_lift.collect(out, prefix + ".semantic_lift");
  spatial_reduce3.collect(out, prefix + ".spatial_reduce3");
  spatial_merge2.collect(out, prefix + ".spatial_merge2");
  spatial_reduce2.collect(out, prefix + ".spatial_reduce2");
  spatial_merge1.collect(out, prefix + ".spatial_merge1");
  srm.collect(out, prefix + ".srm");
  render.collect(out, prefix + ".render");
}

namespace {

Var act(const Var& x) { return ops::leaky_relu(x, kLeakySlope); }

/// R_i block: conv the coarse map, upsample 2x, concat with the finer map, conv.
Var merge_step(const Var& coarse, const Var& fine, const Conv2d& reduce, const Conv2d& merge) {
  const Var lifted = ops::upsample_nearest(act(reduce(coarse)), 2);
  return act(merge(ops::concat_channels({lifted, fine})));
}

}  // namespace

MergedFeatures merge_pyramid(const std::array<Var, kPyramidLevels>& fused, const MrmParams& params) {
  const Shape base = fused[0].shape();
  for (int i = 0; i < kPyramidLevels; ++i) {
    const Shape s = fused[i].shape();
    const int expected_c = params.spatial_merge1.out_channels() << i;
    if (s.n != base.n || s.h * (1 << i) != base.h || s.w * (1 << i) != base.w || s.c != expected_c) {
      throw Error(ErrorKind::BadShape, "fused level " + std::to_string(i + 1) + " has shape " + s.str());
    }
  }
  const Var semantic4 = merge_step(fused[4], fused[3], params.semantic_reduce5, params.semantic_merge4);
  const Var semantic = ops::upsample_nearest(act(params.semantic_lift(semantic4)), 8);
  const Var spatial2 = merge_step(fused[2], fused[1], params.spatial_reduce3, params.spatial_merge2);
  const Var spatial = merge_step(spatial2, fused[0], params.spatial_reduce2, params.spatial_merge1);
  return {spatial, semantic};
}

Rectification semantic_rectify(const Var& semantic, const SrmParams& params) {
  return {params.weight_out(ops::relu(params.weight_in(semantic))),
          params.bias_out(ops::relu(params.bias_in(semantic)))};
}

Var render_rectified(const Var& spatial, const Rectification& rect, const Conv2d& render) {
  if (!(rect.weight.shape() == spatial.shape()) || !(rect.bias.shape() == spatial.shape())) {
    throw Error(ErrorKind::BadShape, "rectification " + rect.weight.shape().str() + " / " +
                                         rect.bias.shape().str() + " vs spatial " + spatial.shape().str());
  }
  return ops::sigmoid(render(ops::add(ops::mul(rect.weight, spatial), rect.bias)));
}

Var rectify_and_render(const Var& spatial, const Var& semantic, const MrmParams& params) {
  if (!(spatial.shape() == semantic.shape())) {
    throw Error(ErrorKind::BadShape, "spatial " + spatial.shape().str() + " vs semantic " + semantic.shape().str());
  }
  return render_rectified(spatial, semantic_rectify(semantic, params.srm), params.render);
}

Var render_additive(const Var& spatial, const Var& semantic, const MrmParams& params) {
  if (!(spatial.shape() == semantic.shape())) {
    throw Error(ErrorKind::BadShape, "spatial " + spatial.shape().str() + " vs semantic " + semantic.shape().str());
  }
  return ops::sigmoid(params.render(ops::add(spatial, semantic)));
}

Tensor recompose_color(const Tensor& fused_y, const Tensor& visible) {
  const Shape ys = fused_y.shape();
  const Shape vs = visible.shape();
  if (ys.c != 1 || vs.c != 3 || ys.n != vs.n || ys.h != vs.h || ys.w != vs.w) {
    throw Error(ErrorKind::BadShape, "recompose_color: " + ys.str() + " with " + vs.str());
  }
  Tensor ycc = rgb_to_ycbcr(visible);
  for (int n = 0; n < ys.n; ++n) std::copy_n(fused_y.plane(n, 0), ys.plane(), ycc.plane(n, 0));
  Tensor rgb = ycbcr_to_rgb(ycc);
  for (double& v : rgb.values()) v = std::clamp(v, 0.0, 1.0);
  return rgb;
}

}  // namespace amfusion
