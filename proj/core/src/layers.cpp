#include "amfusion/layers.hpp"

#include <cmath>

#include "amfusion/ops.hpp"

namespace amfusion {

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  Tensor w(Shape{out_channels, in_channels, kernel, kernel});
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  const double bound = std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.values()) v = dist(rng);
  weight = Parameter(std::move(w));
  bias = Parameter(Tensor(Shape{1, out_channels, 1, 1}));
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, weight.var(), bias.var(), stride, pad);
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

LayerNorm::LayerNorm(int channels)
    : gamma(Tensor(Shape{1, channels, 1, 1}, 1.0)), beta(Tensor(Shape{1, channels, 1, 1})) {}

Var LayerNorm::operator()(const Var& x) const {
  return ops::layer_norm_channels(x, gamma.var(), beta.var());
}

void LayerNorm::collect(ParameterList& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

}  // namespace amfusion
