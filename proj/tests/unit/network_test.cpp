#include <gtest/gtest.h>

#include <cmath>

#include "amfusion/detection.hpp"
#include "amfusion/encoder.hpp"
#include "amfusion/error.hpp"
#include "amfusion/reconstruction.hpp"
#include "amfusion/semantic_fusion.hpp"
#include "amfusion/spatial_fusion.hpp"
#include "testing.hpp"
#include "oracles.hpp"

using namespace amfusion;
using namespace amfusion::testing;

namespace {

FusionConfig small_config() {
  FusionConfig c;
  c.base_channels = 4;
  c.heads = 2;
  return c;
}

// SRM output convs start at the identity; tests want generic heads.
void randomize_srm(MrmParams& p, Rng& rng) {
  const int c = p.srm.weight_out.out_channels();
  p.srm.weight_out = Conv2d(c, c, 3, 1, 1, rng);
  p.srm.bias_out = Conv2d(c, c, 3, 1, 1, rng);
}

void force_bias(Conv2d& conv, double bias) {
  conv.weight.value().fill(0.0);
  conv.bias.value().fill(bias);
}

}  // namespace

// ---------------------------------------------------------------- encoder

TEST(Encoder, PyramidShapes) {
  FusionConfig c;
  Rng rng(1);
  const MultiScaleEncoder enc = MultiScaleEncoder::init(c, rng);
  NoGradGuard g;
  const FeaturePyramid p = enc.extract(Var::constant(Tensor({1, 1, 64, 64}, 0.3)), Branch::Visible);
  for (int i = 1; i <= 5; ++i) {
    EXPECT_EQ(p.level(i).shape(), (Shape{1, c.channels(i), 64 >> (i - 1), 64 >> (i - 1)})) << i;
  }
  EXPECT_EQ(p.level(5).shape().h, 4);
  EXPECT_TRUE(FeaturePyramid::is_spatial(3));
  EXPECT_FALSE(FeaturePyramid::is_spatial(4));
  EXPECT_THROW(enc.extract(Var::constant(Tensor({1, 1, 40, 64}, 0.3)), Branch::Visible), Error);
  EXPECT_THROW(enc.extract(Var::constant(Tensor({1, 3, 64, 64}, 0.3)), Branch::Visible), Error);
}

TEST(Encoder, BranchesAreSeparateAndDeterministic) {
  const FusionConfig c = small_config();
  Rng rng(2);
  MultiScaleEncoder enc = MultiScaleEncoder::init(c, rng);
  std::mt19937_64 trng(3);
  const Var x = Var::constant(random_tensor({1, 1, 32, 32}, trng));
  NoGradGuard g;
  const FeaturePyramid a = enc.extract(x, Branch::Visible);
  const FeaturePyramid b = enc.extract(x, Branch::Visible);
  const FeaturePyramid ir = enc.extract(x, Branch::Infrared);
  for (int i = 1; i <= 5; ++i) EXPECT_EQ(a.level(i).value(), b.level(i).value());
  EXPECT_GT(max_abs_diff(a.level(5).value(), ir.level(5).value()), 0.0);
  // Identical parameters and input give identical pyramids.
  enc.infrared = enc.visible;
  const FeaturePyramid shared = enc.extract(x, Branch::Infrared);
  for (int i = 1; i <= 5; ++i) EXPECT_EQ(a.level(i).value(), shared.level(i).value());
  ParameterList params;
  enc.collect(params, "enc");
  EXPECT_NE(params.front().param, params[params.size() / 2].param);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  const FusionConfig c = small_config();
  Rng rng(4);
  EncoderParams enc = EncoderParams::init(c, 1, rng);
  std::mt19937_64 trng(5);
  // Zero input, zero biases: finite activations and a clean gradient check.
  const Var zero = Var::constant(Tensor({1, 1, 16, 16}, 0.0));
  {
    NoGradGuard g;
    const FeaturePyramid p = extract(zero, enc);
    for (int i = 1; i <= 5; ++i) EXPECT_TRUE(p.level(i).value().all_finite());
  }
  const Tensor x = random_tensor({1, 1, 16, 16}, trng);
  auto scalar = [&](const Var& in) {
    const FeaturePyramid p = extract(in, enc);
    Var total = project(p.level(1), 1);
    for (int i = 2; i <= 5; ++i) total = ops::add(total, project(p.level(i), i));
    return total;
  };
  EXPECT_LT(check_input_gradient(scalar, x, trng).relative_error, 1e-3);
  ParameterList params;
  enc.collect(params, "enc");
  for (std::size_t i = 0; i < params.size(); i += 5) {
    auto f = [&] { return scalar(Var::constant(x)); };
    EXPECT_LT(check_parameter_gradient(f, *params[i].param, trng, 12).relative_error, 1e-3) << params[i].name;
  }
}

// ---------------------------------------------------------- spatial fusion

TEST(SpatialFusion, ChannelAttendMatchesOracle) {
  Rng rng(6);
  ChannelAttention ca(16, rng);
  std::mt19937_64 trng(7);
  const Tensor x = random_tensor({1, 16, 8, 8}, trng, -1, 1);
  NoGradGuard g;
  EXPECT_LT(max_abs_diff(channel_attend(Var::constant(x), ca).value(), o_channel_attend(x, ca)), 1e-12);
  EXPECT_EQ(channel_attend(Var::constant(Tensor({1, 16, 8, 8}, 0.0)), ca).value().max(), 0.0);
  force_bias(ca.expand, 1e3);
  EXPECT_EQ(channel_attend(Var::constant(x), ca).value(), x);
  EXPECT_THROW(channel_attend(Var::constant(Tensor({1, 8, 8, 8}, 0.0)), ca), Error);
}

TEST(SpatialFusion, MatchesWeightedBlendOracle) {
  Rng rng(8);
  const IdfmParams p = IdfmParams::init(8, rng);
  std::mt19937_64 trng(9);
  const Tensor a = random_tensor({2, 8, 8, 8}, trng, -1, 1);
  const Tensor b = random_tensor({2, 8, 8, 8}, trng, -1, 1);
  NoGradGuard g;
  const SpatialFusion out = fuse_spatial(Var::constant(a), Var::constant(b), p);

  const Tensor ca = o_channel_attend(a, p.cam_visible);
  const Tensor cb = o_channel_attend(b, p.cam_infrared);
  Tensor m1, x1, m2, x2;
  mean_max(ca, m1, x1);
  mean_max(cb, m2, x2);
  const Tensor w = o_map(o_conv(o_concat(o_concat(m1, x1), o_concat(m2, x2)), p.sam.conv), o_sigmoid);
  EXPECT_LT(max_abs_diff(out.weight.value(), w), 1e-12);
  const Tensor sa = o_add(ca, a);
  const Tensor sb = o_add(cb, b);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 8; ++c)
      for (int i = 0; i < 64; ++i) {
        const double wi = w.plane(n, 0)[i];
        const double ref = wi * sa.plane(n, c)[i] + (1 - wi) * sb.plane(n, c)[i];
        EXPECT_NEAR(out.fused.value().plane(n, c)[i], ref, 1e-12);
      }
  EXPECT_GT(w.min(), 0.0);
  EXPECT_LT(w.max(), 1.0);
}

TEST(SpatialFusion, ConvexEndpointsAndSymmetry) {
  Rng rng(10);
  IdfmParams p = IdfmParams::init(8, rng);
  std::mt19937_64 trng(11);
  const Var a = Var::constant(random_tensor({1, 8, 8, 8}, trng, -1, 1));
  const Var b = Var::constant(random_tensor({1, 8, 8, 8}, trng, -1, 1));
  NoGradGuard g;
  const Tensor stream_a = o_add(channel_attend(a, p.cam_visible).value(), a.value());
  const Tensor stream_b = o_add(channel_attend(b, p.cam_infrared).value(), b.value());

  IdfmParams one = p;
  force_bias(one.sam.conv, 1e3);
  EXPECT_EQ(fuse_spatial(a, b, one).fused.value(), stream_a);
  IdfmParams zero = p;
  force_bias(zero.sam.conv, -1e3);
  EXPECT_EQ(fuse_spatial(a, b, zero).fused.value(), stream_b);

  // Swap the inputs (and their CAMs); reversing the 4-channel SAM stack turns w into 1 - w.
  IdfmParams swapped = p;
  std::swap(swapped.cam_visible, swapped.cam_infrared);
  Tensor& wt = swapped.sam.conv.weight.value();
  const Tensor orig = p.sam.conv.weight.value();
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 49; ++i) wt.plane(0, c)[i] = -orig.plane(0, (c + 2) % 4)[i];
  swapped.sam.conv.bias.value()[0] = -p.sam.conv.bias.value()[0];
  const SpatialFusion s1 = fuse_spatial(a, b, p);
  const SpatialFusion s2 = fuse_spatial(b, a, swapped);
  EXPECT_LT(max_abs_diff(s1.fused.value(), s2.fused.value()), 1e-12);
}

TEST(SpatialFusion, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  IdfmParams p = IdfmParams::init(8, rng);
  std::mt19937_64 trng(13);
  const Tensor a = random_tensor({1, 8, 8, 8}, trng, -1, 1);
  const Tensor b = random_tensor({1, 8, 8, 8}, trng, -1, 1);
  auto fa = [&](const Var& x) { return project(fuse_spatial(x, Var::constant(b), p).fused); };
  EXPECT_LT(check_input_gradient(fa, a, trng).relative_error, 1e-3);
  ParameterList params;
  p.collect(params, "idfm");
  for (auto& np : params) {
    auto f = [&] { return project(fuse_spatial(Var::constant(a), Var::constant(b), p).fused); };
    EXPECT_LT(check_parameter_gradient(f, *np.param, trng, 12).relative_error, 1e-3) << np.name;
  }
  CbamFusionParams cb = CbamFusionParams::init(8, rng);
  auto fc = [&](const Var& x) { return project(fuse_spatial_cbam(x, Var::constant(b), cb).fused); };
  EXPECT_LT(check_input_gradient(fc, a, trng).relative_error, 1e-3);
}

// --------------------------------------------------------- semantic fusion

TEST(SemanticFusion, MatchesNaiveAttentionOracle) {
  std::mt19937_64 trng(14);
  for (int heads : {1, 4}) {
    Rng rng(15);
    const DsfmParams p = DsfmParams::init(32, heads, rng);
    const Tensor vis = random_tensor({1, 32, 4, 4}, trng, -1, 1);
    const Tensor ir = random_tensor({1, 32, 4, 4}, trng, -1, 1);
    const Tensor det = random_tensor({1, 32, 4, 4}, trng, -1, 1);
    NoGradGuard g;
    AttentionTrace trace;
    const Var out = fuse_semantic(Var::constant(vis), Var::constant(ir), Var::constant(det), p, &trace);
    EXPECT_LT(max_abs_diff(out.value(), o_cross_fuse(vis, ir, det, p)), 1e-10) << heads;
    ASSERT_EQ(trace.probabilities.size(), 3u * heads);
    for (const Tensor& m : trace.probabilities) {
      EXPECT_EQ(m.shape(), (Shape{1, 1, 16, 16}));
      for (int i = 0; i < 16; ++i) {
        double row = 0;
        for (int j = 0; j < 16; ++j) row += m[i * 16 + j];
        EXPECT_NEAR(row, 1.0, 1e-12);
      }
    }
    // Self variant: detection stream replaced by a 1x1 projection of the concatenation.
    const Tensor source = o_conv(o_concat(vis, ir), p.self_source);
    const Var self = fuse_semantic_self(Var::constant(vis), Var::constant(ir), p);
    EXPECT_LT(max_abs_diff(self.value(), o_cross_fuse(vis, ir, source, p)), 1e-10) << heads;
  }
}

TEST(SemanticFusion, ZeroValuesGiveBiasResponse) {
  Rng rng(16);
  DsfmParams p = DsfmParams::init(8, 2, rng);
  for (Embedding* e : {&p.embed_visible, &p.embed_infrared, &p.embed_detection}) force_bias(e->value, 0.0);
  for (MultiHeadAttention* m : {&p.attn_visible, &p.attn_infrared, &p.attn_detection}) m->output.bias.value().fill(0.0);
  std::mt19937_64 trng(17);
  const Tensor vis = random_tensor({1, 8, 4, 4}, trng);
  NoGradGuard g;
  const Tensor out = fuse_semantic(Var::constant(vis), Var::constant(vis), Var::constant(vis), p).value();
  // Attention outputs are zero, so each stream is Linear(LN(0)) = Linear(beta) and the result is constant
  // away from the zero-padded border of the final 3x3 conv.
  const Tensor stream_a = o_conv(o_layer_norm(Tensor({1, 8, 4, 4}, 0.0), p.norm_visible), p.linear_visible);
  const Tensor stream_b = o_conv(o_layer_norm(Tensor({1, 8, 4, 4}, 0.0), p.norm_infrared), p.linear_infrared);
  EXPECT_LT(max_abs_diff(out, o_conv(o_concat(stream_a, stream_b), p.output)), 1e-12);
}

TEST(SemanticFusion, PermutationEquivariantExceptOutputConv) {
  // The attention core (everything before the spatial 3x3 conv) commutes with a shared permutation of
  // positions; check it through the streams by making the output conv pointwise.
  Rng rng(18);
  DsfmParams p = DsfmParams::init(8, 2, rng);
  p.output = Conv2d(16, 8, 1, 1, 0, rng);
  std::mt19937_64 trng(19);
  const Tensor vis = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  const Tensor ir = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  const Tensor det = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  std::vector<int> perm(16);
  for (int i = 0; i < 16; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), trng);
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (int c = 0; c < t.shape().c; ++c)
      for (int i = 0; i < 16; ++i) out.plane(0, c)[i] = t.plane(0, c)[perm[i]];
    return out;
  };
  NoGradGuard g;
  const Tensor a = fuse_semantic(Var::constant(vis), Var::constant(ir), Var::constant(det), p).value();
  const Tensor b =
      fuse_semantic(Var::constant(permute(vis)), Var::constant(permute(ir)), Var::constant(permute(det)), p).value();
  EXPECT_LT(max_abs_diff(permute(a), b), 1e-12);
}

TEST(SemanticFusion, ShapeErrors) {
  Rng rng(20);
  const DsfmParams p = DsfmParams::init(8, 2, rng);
  const Var x = Var::constant(Tensor({1, 8, 4, 4}, 0.1));
  const Var y = Var::constant(Tensor({1, 8, 2, 2}, 0.1));
  EXPECT_THROW(fuse_semantic(x, x, y, p), Error);
  try {
    Rng r(1);
    DsfmParams::init(6, 4, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HeadDivisibility);
  }
}

TEST(SemanticFusion, GradientsMatchFiniteDifferences) {
  Rng rng(21);
  DsfmParams p = DsfmParams::init(8, 2, rng);
  std::mt19937_64 trng(22);
  const Tensor vis = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  const Tensor ir = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  const Tensor det = random_tensor({1, 8, 4, 4}, trng, -1, 1);
  auto fv = [&](const Var& x) { return project(fuse_semantic(x, Var::constant(ir), Var::constant(det), p)); };
  auto fd = [&](const Var& x) { return project(fuse_semantic(Var::constant(vis), Var::constant(ir), x, p)); };
  EXPECT_LT(check_input_gradient(fv, vis, trng).relative_error, 1e-3);
  EXPECT_LT(check_input_gradient(fd, det, trng).relative_error, 1e-3);
  ParameterList params;
  p.collect(params, "dsfm");
  for (auto& np : params) {
    auto f = [&] { return project(fuse_semantic(Var::constant(vis), Var::constant(ir), Var::constant(det), p)); };
    // Key biases shift every logit of a query equally, so softmax makes their gradient exactly zero.
    const auto r = check_parameter_gradient(f, *np.param, trng, 8);
    if (np.name.ends_with("key.bias")) {
      EXPECT_LT(std::max(r.analytic_norm, r.numeric_norm), 1e-8) << np.name;
    } else {
      EXPECT_LT(r.relative_error, 1e-3) << np.name;
    }
  }
  SelfAttentionFusionParams base = SelfAttentionFusionParams::init(8, 2, rng);
  auto fb = [&](const Var& x) { return project(fuse_semantic_baseline(x, Var::constant(ir), base)); };
  EXPECT_LT(check_input_gradient(fb, vis, trng).relative_error, 1e-3);
}

// ------------------------------------------------------------- detection

TEST(Detection, ShapesAndNullProvider) {
  FusionConfig c;
  Rng rng(23);
  TinyBackbone tiny(c, rng);
  NullProvider null(c);
  const Var vis = Var::constant(Tensor({1, 3, 256, 256}, 0.5));
  const Var ir = Var::constant(Tensor({1, 1, 256, 256}, 0.5));
  NoGradGuard g;
  const DetectionFeatures f = tiny.features(vis, ir);
  EXPECT_EQ(f.level4.shape(), (Shape{1, 128, 32, 32}));
  EXPECT_EQ(f.level5.shape(), (Shape{1, 256, 16, 16}));
  EXPECT_TRUE(f.level4.value().all_finite());
  const DetectionFeatures z = null.features(vis, ir);
  EXPECT_EQ(z.level4.shape(), f.level4.shape());
  EXPECT_EQ(z.level5.shape(), f.level5.shape());
  EXPECT_EQ(z.level5.value().max(), 0.0);
  EXPECT_EQ(z.level5.value().min(), 0.0);
  EXPECT_FALSE(null.informative());
  EXPECT_THROW(tiny.features(Var::constant(Tensor({1, 3, 40, 40}, 0.5)), Var::constant(Tensor({1, 1, 40, 40}, 0.5))),
               Error);
}

TEST(Detection, ZeroInputZeroBiasGivesZeroMaps) {
  FusionConfig c = small_config();
  Rng rng(24);
  TinyBackbone tiny(c, rng);
  NoGradGuard g;
  const DetectionFeatures f =
      tiny.features(Var::constant(Tensor({1, 3, 32, 32}, 0.0)), Var::constant(Tensor({1, 1, 32, 32}, 0.0)));
  EXPECT_EQ(f.level4.value().max(), 0.0);
  EXPECT_EQ(f.level5.value().min(), 0.0);
}

TEST(Detection, FreezeIsIdempotent) {
  FusionConfig c = small_config();
  Rng rng(25);
  TinyBackbone tiny(c, rng);
  freeze(freeze(tiny));
  EXPECT_TRUE(tiny.frozen());
  ParameterList params;
  tiny.collect(params, "d");
  for (auto& p : params) EXPECT_FALSE(p.param->trainable());
  const DetectionFeatures f = tiny.features(Var::constant(Tensor({1, 3, 32, 32}, 0.3)),
                                            Var::constant(Tensor({1, 1, 32, 32}, 0.3)));
  EXPECT_FALSE(f.level5.requires_grad());
  unfreeze(unfreeze(tiny));
  for (auto& p : params) EXPECT_TRUE(p.param->trainable());
}

TEST(Detection, ExternalWeightsRoundTrip) {
  FusionConfig c = small_config();
  Rng rng(26);
  TinyBackbone tiny(c, rng);
  const auto path = std::filesystem::temp_directory_path() / "amfusion_detector.amf";
  save_detector_weights(path, tiny);
  c.detector = "external:" + path.string();
  Rng other(99);
  auto loaded = make_provider(c, other);
  ParameterList a, b;
  tiny.collect(a, "d");
  loaded->collect(b, "d");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].param->value(), b[i].param->value());
  c.detector = "external:/nonexistent/weights.amf";
  EXPECT_THROW(make_provider(c, other), Error);
}

// ---------------------------------------------------------- reconstruction

TEST(Reconstruction, MergeShapesAndUpsampleOracle) {
  FusionConfig c;
  Rng rng(27);
  const MrmParams p = MrmParams::init(c, rng);
  std::array<Var, kPyramidLevels> levels;
  std::mt19937_64 trng(28);
  for (int i = 0; i < 5; ++i) levels[i] = Var::constant(random_tensor({1, c.channels(i + 1), 64 >> i, 64 >> i}, trng));
  NoGradGuard g;
  const MergedFeatures m = merge_pyramid(levels, p);
  EXPECT_EQ(m.spatial.shape(), (Shape{1, 16, 64, 64}));
  EXPECT_EQ(m.semantic.shape(), (Shape{1, 16, 64, 64}));
  std::array<Var, kPyramidLevels> bad = levels;
  bad[2] = levels[3];
  EXPECT_THROW(merge_pyramid(bad, p), Error);

  const Tensor x = random_tensor({1, 2, 3, 5}, trng);
  const Tensor up = ops::upsample_nearest(Var::constant(x), 4).value();
  for (int cc = 0; cc < 2; ++cc)
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 20; ++j) EXPECT_EQ(up.at(0, cc, i, j), x.at(0, cc, i / 4, j / 4));
}

TEST(Reconstruction, ZeroLevelsZeroBiasesGiveZero) {
  FusionConfig c = small_config();
  Rng rng(29);
  const MrmParams p = MrmParams::init(c, rng);
  std::array<Var, kPyramidLevels> levels;
  for (int i = 0; i < 5; ++i) levels[i] = Var::constant(Tensor({1, c.channels(i + 1), 32 >> i, 32 >> i}, 0.0));
  NoGradGuard g;
  const MergedFeatures m = merge_pyramid(levels, p);
  EXPECT_EQ(m.spatial.value().max(), 0.0);
  EXPECT_EQ(m.semantic.value().min(), 0.0);
}

TEST(Reconstruction, RectificationOracleAndForcedCases) {
  FusionConfig c = small_config();
  Rng rng(30);
  MrmParams p = MrmParams::init(c, rng);
  randomize_srm(p, rng);
  std::mt19937_64 trng(31);
  const Tensor sp = random_tensor({1, 4, 8, 8}, trng, -1, 1);
  const Tensor se = random_tensor({1, 4, 8, 8}, trng, -1, 1);
  NoGradGuard g;
  const Rectification r = semantic_rectify(Var::constant(se), p.srm);
  const Tensor w = o_conv(o_map(o_conv(se, p.srm.weight_in), o_relu), p.srm.weight_out);
  const Tensor b = o_conv(o_map(o_conv(se, p.srm.bias_in), o_relu), p.srm.bias_out);
  EXPECT_LT(max_abs_diff(r.weight.value(), w), 1e-12);
  EXPECT_LT(max_abs_diff(r.bias.value(), b), 1e-12);
  Tensor rect = sp;
  for (std::size_t i = 0; i < rect.size(); ++i) rect[i] = w[i] * sp[i] + b[i];
  const Tensor out = rectify_and_render(Var::constant(sp), Var::constant(se), p).value();
  EXPECT_LT(max_abs_diff(out, o_map(o_conv(rect, p.render), o_sigmoid)), 1e-12);
  EXPECT_GT(out.min(), 0.0);
  EXPECT_LT(out.max(), 1.0);

  // w_se = 1, b_se = 0: pass-through.
  const Rectification identity{Var::constant(Tensor(sp.shape(), 1.0)), Var::constant(Tensor(sp.shape(), 0.0))};
  EXPECT_LT(max_abs_diff(render_rectified(Var::constant(sp), identity, p.render).value(),
                         o_map(o_conv(sp, p.render), o_sigmoid)),
            1e-15);
  // Zero spatial stream: the bias alone decides the output.
  const Tensor zero_out = rectify_and_render(Var::constant(Tensor(sp.shape(), 0.0)), Var::constant(se), p).value();
  EXPECT_LT(max_abs_diff(zero_out, o_map(o_conv(b, p.render), o_sigmoid)), 1e-12);
  // Additive ablation.
  EXPECT_LT(max_abs_diff(render_additive(Var::constant(sp), Var::constant(se), p).value(),
                         o_map(o_conv(o_add(sp, se), p.render), o_sigmoid)),
            1e-12);
}

TEST(Reconstruction, SrmStartsAtIdentity) {
  FusionConfig c = small_config();
  Rng rng(35);
  const MrmParams p = MrmParams::init(c, rng);
  std::mt19937_64 trng(36);
  NoGradGuard g;
  const Rectification r = semantic_rectify(Var::constant(random_tensor({1, 4, 8, 8}, trng, -1, 1)), p.srm);
  EXPECT_EQ(r.weight.value().min(), 1.0);
  EXPECT_EQ(r.weight.value().max(), 1.0);
  EXPECT_EQ(r.bias.value().max(), 0.0);
}

TEST(Reconstruction, SrmGradients) {
  FusionConfig c = small_config();
  Rng rng(32);
  MrmParams p = MrmParams::init(c, rng);
  randomize_srm(p, rng);
  std::mt19937_64 trng(33);
  const Tensor sp = random_tensor({1, 4, 8, 8}, trng, -1, 1);
  const Tensor se = random_tensor({1, 4, 8, 8}, trng, -1, 1);
  auto fse = [&](const Var& x) { return project(rectify_and_render(Var::constant(sp), x, p)); };
  auto fsp = [&](const Var& x) { return project(rectify_and_render(x, Var::constant(se), p)); };
  EXPECT_LT(check_input_gradient(fse, se, trng).relative_error, 1e-3);
  EXPECT_LT(check_input_gradient(fsp, sp, trng).relative_error, 1e-3);
  ParameterList params;
  p.srm.collect(params, "srm");
  for (auto& np : params) {
    auto f = [&] { return project(rectify_and_render(Var::constant(sp), Var::constant(se), p)); };
    EXPECT_LT(check_parameter_gradient(f, *np.param, trng, 12).relative_error, 1e-3) << np.name;
  }
}

TEST(Reconstruction, RecomposeColor) {
  std::mt19937_64 trng(34);
  const Tensor vis = random_tensor({1, 3, 8, 8}, trng);
  EXPECT_LT(max_abs_diff(recompose_color(to_luminance(vis), vis), vis), 2.0 / 255);
  Tensor gray(Shape{1, 3, 8, 8});
  const Tensor g = random_tensor({1, 1, 8, 8}, trng);
  for (int c = 0; c < 3; ++c) std::copy_n(g.plane(0, 0), 64, gray.plane(0, c));
  const Tensor fused_y = random_tensor({1, 1, 8, 8}, trng);
  const Tensor out = recompose_color(fused_y, gray);
  for (int c = 0; c < 3; ++c) EXPECT_LT(max_abs_diff(out.slice_channels(c, 1), fused_y), 1.0 / 255);
  // Per-pixel colour-math oracle.
  const Tensor rgb = recompose_color(fused_y, vis);
  for (int i = 0; i < 64; ++i) {
    const double r = vis.plane(0, 0)[i], gg = vis.plane(0, 1)[i], b = vis.plane(0, 2)[i];
    const double y = 0.299 * r + 0.587 * gg + 0.114 * b;
    const double cb = (b - y) / 1.772, cr = (r - y) / 1.402;
    const double yy = fused_y[i];
    const double ref[3] = {yy + 1.402 * cr, yy - (0.114 * 1.772 * cb + 0.299 * 1.402 * cr) / 0.587, yy + 1.772 * cb};
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(rgb.plane(0, c)[i], std::clamp(ref[c], 0.0, 1.0), 1e-12);
  }
}
