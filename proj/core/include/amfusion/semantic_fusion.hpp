#pragma once

#include <vector>

#include "amfusion/layers.hpp"

namespace amfusion {

/// 1x1 projections of one input stream into query, key and value (each C wide).
struct Embedding {
  Conv2d query;
  Conv2d key;
  Conv2d value;

  static Embedding init(int channels, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Multi-head attention: per-head scaled dot product followed by a 1x1 output
/// projection. The query/key/value projections live in the embeddings.
struct MultiHeadAttention {
  Conv2d output;
  int heads = 1;

  static MultiHeadAttention init(int channels, int heads, Rng& rng);
  Var operator()(const Var& q, const Var& k, const Var& v, std::vector<Tensor>* probabilities = nullptr) const;
  void collect(ParameterList& out, const std::string& prefix);
};

/// Detection-guided semantic fusion parameters for one semantic level.
struct DsfmParams {
  Embedding embed_visible;
  Embedding embed_infrared;
  Embedding embed_detection;
  Conv2d query_merge;  // 1x1 over Concat(Q_D, Q_G)
  MultiHeadAttention attn_visible;   // attn(Q_d, K_D, V_D)
  MultiHeadAttention attn_infrared;  // attn(Q_d, K_G, V_G)
  MultiHeadAttention attn_detection; // attn(merged query, K_d, V_d)
  LayerNorm norm_visible;
  LayerNorm norm_infrared;
  Conv2d linear_visible;
  Conv2d linear_infrared;
  Conv2d output;       // 3x3 over Concat(F^a_D, F^a_G)
  Conv2d self_source;  // 1x1 over Concat(F_D, F_G); stands in for F_d without detection features

  int heads() const { return attn_visible.heads; }
  static DsfmParams init(int channels, int heads, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Single-stream self-attention fusion used when DSFM is ablated.
struct SelfAttentionFusionParams {
  Conv2d merge;
  Embedding embed;
  MultiHeadAttention attn;
  LayerNorm norm;
  Conv2d linear;

  static SelfAttentionFusionParams init(int channels, int heads, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix);
};

/// Collects the softmax matrices of every attention call, for inspection.
struct AttentionTrace {
  std::vector<Tensor> probabilities;
};

/// Cross-attention fusion guided by detection features. All inputs must share
/// shape NxCxHxW; throws BadShape otherwise and HeadDivisibility when C is not
/// a multiple of the head count.
Var fuse_semantic(const Var& visible, const Var& infrared, const Var& detection, const DsfmParams& params,
                  AttentionTrace* trace = nullptr);

/// Same composition with the detection stream replaced by a 1x1 projection of
/// Concat(F_D, F_G).
Var fuse_semantic_self(const Var& visible, const Var& infrared, const DsfmParams& params,
                       AttentionTrace* trace = nullptr);

Var fuse_semantic_baseline(const Var& visible, const Var& infrared, const SelfAttentionFusionParams& params,
                           AttentionTrace* trace = nullptr);

}  // namespace amfusion
