#include "amfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "amfusion/error.hpp"

namespace amfusion {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw Error(ErrorKind::BadShape, "value count " + std::to_string(data_.size()) +
                                         " does not match shape " + shape_.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_(const Tensor& other) {
  if (!(shape_ == other.shape_)) {
    throw Error(ErrorKind::ShapeMismatch, shape_.str() + " += " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Tensor Tensor::slice_batch(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > shape_.n) {
    throw Error(ErrorKind::BadShape, "batch slice out of range for " + shape_.str());
  }
  Shape s = shape_;
  s.n = count;
  Tensor out(s);
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(begin * per), count * per, out.data_.begin());
  return out;
}

Tensor Tensor::slice_channels(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > shape_.c) {
    throw Error(ErrorKind::BadShape, "channel slice out of range for " + shape_.str());
  }
  Shape s = shape_;
  s.c = count;
  Tensor out(s);
  for (int n = 0; n < shape_.n; ++n) {
    std::copy_n(plane(n, begin), count * shape_.plane(), out.plane(n, 0));
  }
  return out;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::min() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> samples) {
  if (samples.empty()) throw Error(ErrorKind::BadShape, "cannot stack an empty batch");
  Shape s = samples.front().shape();
  int total = 0;
  for (const Tensor& t : samples) {
    const Shape& ts = t.shape();
    if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
      throw Error(ErrorKind::ShapeMismatch, "stack_batch: " + s.str() + " vs " + ts.str());
    }
    total += ts.n;
  }
  s.n = total;
  Tensor out(s);
  std::size_t offset = 0;
  for (const Tensor& t : samples) {
    std::copy(t.values().begin(), t.values().end(), out.data() + offset);
    offset += t.size();
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorKind::ShapeMismatch, a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace amfusion
