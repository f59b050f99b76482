#include "amfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "amfusion/error.hpp"

namespace amfusion {

int intensity_bin(double v) {
  const double scaled = std::floor(v * kHistogramBins);
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kHistogramBins - 1)));
}

Histogram Histogram::of(const Tensor& image) {
  Histogram h;
  for (double v : image.values()) ++h.counts[intensity_bin(v)];
  h.total = image.size();
  return h;
}

double Histogram::probability(int bin) const {
  return total == 0 ? 0.0 : static_cast<double>(counts[bin]) / static_cast<double>(total);
}

double entropy(const Tensor& image) {
  const Histogram h = Histogram::of(image);
  double en = 0.0;
  for (int b = 0; b < kHistogramBins; ++b) {
    const double p = h.probability(b);
    if (p > 0.0) en -= p * std::log2(p);
  }
  return en;
}

double pairwise_mutual_information(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.shape().h != b.shape().h || a.shape().w != b.shape().w) {
    throw Error(ErrorKind::ShapeMismatch, "mutual information: " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.size() == 0) return 0.0;
  std::vector<std::uint64_t> joint(static_cast<std::size_t>(kHistogramBins) * kHistogramBins, 0);
  std::array<std::uint64_t, kHistogramBins> ca{};
  std::array<std::uint64_t, kHistogramBins> cb{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int ia = intensity_bin(a[i]);
    const int ib = intensity_bin(b[i]);
    ++joint[static_cast<std::size_t>(ia) * kHistogramBins + ib];
    ++ca[ia];
    ++cb[ib];
  }
  const double total = static_cast<double>(a.size());
  double mi = 0.0;
  for (int i = 0; i < kHistogramBins; ++i) {
    if (ca[i] == 0) continue;
    for (int j = 0; j < kHistogramBins; ++j) {
      const std::uint64_t c = joint[static_cast<std::size_t>(i) * kHistogramBins + j];
      if (c == 0) continue;
      const double pab = c / total;
      mi += pab * std::log2(pab / ((ca[i] / total) * (cb[j] / total)));
    }
  }
  return std::max(mi, 0.0);
}

double mutual_information(const Tensor& fused, const Tensor& visible_y, const Tensor& infrared) {
  return pairwise_mutual_information(fused, visible_y) + pairwise_mutual_information(fused, infrared);
}

double standard_deviation(const Tensor& image) {
  if (image.size() == 0) return 0.0;
  const double n = static_cast<double>(image.size());
  const double mean = image.sum() * 255.0 / n;
  double acc = 0.0;
  for (double v : image.values()) {
    const double d = 255.0 * v - mean;
    acc += d * d;
  }
  return std::sqrt(acc / n);
}

MetricReport evaluate_metrics(const Tensor& fused, const Tensor& visible_y, const Tensor& infrared) {
  return MetricReport{entropy(fused), mutual_information(fused, visible_y, infrared), standard_deviation(fused)};
}

}  // namespace amfusion
