#pragma once

#include <vector>

#include "amfusion/autograd.hpp"

namespace amfusion::ops {

// Elementwise arithmetic. Binary ops broadcast any extent-1 dimension.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& x, double s);
Var mul_scalar(const Var& x, double s);
Var one_minus(const Var& x);
Var square(const Var& x);
/// sqrt with a zero subgradient at 0.
Var sqrt(const Var& x);
/// |x| with a zero subgradient at 0.
Var abs(const Var& x);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);
/// Sum over C, H, W per sample: [N,1,1,1].
Var sum_per_sample(const Var& x);

/// 2-D cross-correlation with zero padding. weight is [Cout,Cin,k,k], bias is
/// [1,Cout,1,1] or empty.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

enum class Padding { Valid, Reflect };
/// Applies one fixed kernel [1,1,kh,kw] to every channel independently.
/// Reflect padding mirrors about the edge sample (edge not repeated).
Var filter2d(const Var& x, const Tensor& kernel, Padding padding);

Var concat_channels(const std::vector<Var>& xs);

Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);
Var channel_mean(const Var& x);
Var channel_max(const Var& x);
/// Mean over non-overlapping k x k blocks.
Var block_mean(const Var& x, int k);
Var upsample_nearest(const Var& x, int factor);

/// LayerNorm over the channel axis at every (n, h, w); gamma/beta are [1,C,1,1].
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Scaled dot-product attention with heads split along C. Tokens are the
/// spatial positions of each sample. q is [N,C,Hq,Wq]; k and v share
/// [N,C,Hk,Wk]. Output has q's shape. When `probabilities` is non-null it
/// receives one [1,1,Lq,Lk] row-stochastic matrix per (sample, head).
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, int heads,
                         std::vector<Tensor>* probabilities = nullptr);

}  // namespace amfusion::ops
