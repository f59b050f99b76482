#pragma once

#include <random>
#include <string>

#include "amfusion/autograd.hpp"

namespace amfusion {

using Rng = std::mt19937_64;

/// Learnable 2-D convolution. Weights use He-uniform initialization for a
/// leaky-ReLU(0.2) successor; biases start at zero.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, Rng& rng);

  Var operator()(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix);

  int in_channels() const { return weight.value().shape().c; }
  int out_channels() const { return weight.value().shape().n; }
  int kernel() const { return weight.value().shape().h; }

  Parameter weight;
  Parameter bias;
  int stride = 1;
  int pad = 0;
};

/// Channel-axis LayerNorm with affine parameters (gamma = 1, beta = 0 at init).
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int channels);

  Var operator()(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix);

  Parameter gamma;
  Parameter beta;
};

constexpr double kLeakySlope = 0.2;

}  // namespace amfusion
