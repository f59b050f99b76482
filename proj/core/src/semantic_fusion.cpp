#include "amfusion/semantic_fusion.hpp"

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

Embedding Embedding::init(int channels, Rng& rng) {
  return Embedding{Conv2d(channels, channels, 1, 1, 0, rng), Conv2d(channels, channels, 1, 1, 0, rng),
                   Conv2d(channels, channels, 1, 1, 0, rng)};
}

void Embedding::collect(ParameterList& out, const std::string& prefix) {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
}

MultiHeadAttention MultiHeadAttention::init(int channels, int heads, Rng& rng) {
  if (heads <= 0 || channels % heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                std::to_string(channels) + " channels not divisible by " + std::to_string(heads) + " heads");
  }
  return MultiHeadAttention{Conv2d(channels, channels, 1, 1, 0, rng), heads};
}

Var MultiHeadAttention::operator()(const Var& q, const Var& k, const Var& v,
                                   std::vector<Tensor>* probabilities) const {
  return output(ops::scaled_dot_attention(q, k, v, heads, probabilities));
}

void MultiHeadAttention::collect(ParameterList& out, const std::string& prefix) {
  output.collect(out, prefix + ".output");
}

DsfmParams DsfmParams::init(int channels, int heads, Rng& rng) {
  DsfmParams p;
  p.embed_visible = Embedding::init(channels, rng);
  p.embed_infrared = Embedding::init(channels, rng);
  p.embed_detection = Embedding::init(channels, rng);
  p.query_merge = Conv2d(2 * channels, channels, 1, 1, 0, rng);
  p.attn_visible = MultiHeadAttention::init(channels, heads, rng);
  p.attn_infrared = MultiHeadAttention::init(channels, heads, rng);
  p.attn_detection = MultiHeadAttention::init(channels, heads, rng);
  p.norm_visible = LayerNorm(channels);
  p.norm_infrared = LayerNorm(channels);
  p.linear_visible = Conv2d(channels, channels, 1, 1, 0, rng);
  p.linear_infrared = Conv2d(channels, channels, 1, 1, 0, rng);
  p.output = Conv2d(2 * channels, channels, 3, 1, 1, rng);
  p.self_source = Conv2d(2 * channels, channels, 1, 1, 0, rng);
  return p;
}

void DsfmParams::collect(ParameterList& out, const std::string& prefix) {
  embed_visible.collect(out, prefix + ".embed_visible");
  embed_infrared.collect(out, prefix + ".embed_infrared");
  embed_detection.collect(out, prefix + ".embed_detection");
  query_merge.collect(out, prefix + ".query_merge");
  attn_visible.collect(out, prefix + ".attn_visible");
  attn_infrared.collect(out, prefix + ".attn_infrared");
  attn_detection.collect(out, prefix + ".attn_detection");
  norm_visible.collect(out, prefix + ".norm_visible");
  norm_infrared.collect(out, prefix + ".norm_infrared");
  linear_visible.collect(out, prefix + ".linear_visible");
  linear_infrared.collect(out, prefix + ".linear_infrared");
  output.collect(out, prefix + ".output");
  self_source.collect(out, prefix + ".self_source");
}

SelfAttentionFusionParams SelfAttentionFusionParams::init(int channels, int heads, Rng& rng) {
  SelfAttentionFusionParams p;
  p.merge = Conv2d(2 * channels, channels, 1, 1, 0, rng);
  p.embed = Embedding::init(channels, rng);
  p.attn = MultiHeadAttention::init(channels, heads, rng);
  p.norm = LayerNorm(channels);
  p.linear = Conv2d(channels, channels, 1, 1, 0, rng);
  return p;
}

void SelfAttentionFusionParams::collect(ParameterList& out, const std::string& prefix) {
  merge.collect(out, prefix + ".merge");
  embed.collect(out, prefix + ".embed");
  attn.collect(out, prefix + ".attn");
  norm.collect(out, prefix + ".norm");
  linear.collect(out, prefix + ".linear");
}

namespace {

void check_inputs(std::initializer_list<const Var*> inputs, int channels, int heads) {
  const Shape& s = (*inputs.begin())->shape();
  for (const Var* v : inputs) {
    if (!(v->shape() == s)) {
      throw Error(ErrorKind::BadShape, "semantic fusion inputs differ: " + s.str() + " vs " + v->shape().str());
    }
  }
  if (s.c != channels) {
    throw Error(ErrorKind::BadShape,
                "semantic fusion expects " + std::to_string(channels) + " channels, got " + s.str());
  }
  if (heads <= 0 || s.c % heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                std::to_string(s.c) + " channels not divisible by " + std::to_string(heads) + " heads");
  }
}

std::vector<Tensor>* sink(AttentionTrace* trace) { return trace ? &trace->probabilities : nullptr; }

Var cross_fuse(const Var& visible, const Var& infrared, const Var& detection, const DsfmParams& p,
               AttentionTrace* trace) {
  const Var q_vis = p.embed_visible.query(visible);
  const Var k_vis = p.embed_visible.key(visible);
  const Var v_vis = p.embed_visible.value(visible);
  const Var q_ir = p.embed_infrared.query(infrared);
  const Var k_ir = p.embed_infrared.key(infrared);
  const Var v_ir = p.embed_infrared.value(infrared);
  const Var q_det = p.embed_detection.query(detection);
  const Var k_det = p.embed_detection.key(detection);
  const Var v_det = p.embed_detection.value(detection);

  const Var det_on_vis = p.attn_visible(q_det, k_vis, v_vis, sink(trace));
  const Var det_on_ir = p.attn_infrared(q_det, k_ir, v_ir, sink(trace));
  const Var merged_query = p.query_merge(ops::concat_channels({q_vis, q_ir}));
  const Var fused_on_det = p.attn_detection(merged_query, k_det, v_det, sink(trace));

  const Var stream_vis = p.linear_visible(p.norm_visible(ops::add(fused_on_det, det_on_vis)));
  const Var stream_ir = p.linear_infrared(p.norm_infrared(ops::add(fused_on_det, det_on_ir)));
  return p.output(ops::concat_channels({stream_vis, stream_ir}));
}

}  // namespace

Var fuse_semantic(const Var& visible, const Var& infrared, const Var& detection, const DsfmParams& params,
                  AttentionTrace* trace) {
  check_inputs({&visible, &infrared, &detection}, params.output.out_channels(), params.heads());
  return cross_fuse(visible, infrared, detection, params, trace);
}

Var fuse_semantic_self(const Var& visible, const Var& infrared, const DsfmParams& params,
                       AttentionTrace* trace) {
  check_inputs({&visible, &infrared}, params.output.out_channels(), params.heads());
  const Var source = params.self_source(ops::concat_channels({visible, infrared}));
  return cross_fuse(visible, infrared, source, params, trace);
}

Var fuse_semantic_baseline(const Var& visible, const Var& infrared, const SelfAttentionFusionParams& params,
                           AttentionTrace* trace) {
  check_inputs({&visible, &infrared}, params.linear.out_channels(), params.attn.heads);
  const Var x = params.merge(ops::concat_channels({visible, infrared}));
  const Var attended =
      params.attn(params.embed.query(x), params.embed.key(x), params.embed.value(x), sink(trace));
  return params.linear(params.norm(ops::add(x, attended)));
}

}  // namespace amfusion
