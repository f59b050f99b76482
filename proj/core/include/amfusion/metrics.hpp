#pragma once

#include <array>
#include <cstdint>

#include "amfusion/datamodel.hpp"

namespace amfusion {

constexpr int kHistogramBins = 256;

/// Bin of an intensity in [0,1]: floor(256 v), clamped to [0, 255]. Exact
/// 8-bit values k/255 land in bin k.
int intensity_bin(double v);

struct Histogram {
  std::array<std::uint64_t, kHistogramBins> counts{};
  std::uint64_t total = 0;

  static Histogram of(const Tensor& image);
  double probability(int bin) const;
};

/// Shannon entropy of the 256-bin histogram, in bits.
double entropy(const Tensor& image);

/// I(a; b) from the 256x256 joint histogram, in bits. Throws ShapeMismatch.
double pairwise_mutual_information(const Tensor& a, const Tensor& b);

/// I(fused; visible) + I(fused; infrared).
double mutual_information(const Tensor& fused, const Tensor& visible_y, const Tensor& infrared);

/// Population standard deviation of 255 * image.
double standard_deviation(const Tensor& image);

MetricReport evaluate_metrics(const Tensor& fused, const Tensor& visible_y, const Tensor& infrared);

}  // namespace amfusion
