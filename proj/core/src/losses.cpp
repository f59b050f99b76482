#include "amfusion/losses.hpp"

#include <algorithm>
#include <cmath>

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"

namespace amfusion {

namespace {

void require_same_extent(const Shape& a, const Shape& b, const char* what) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": " + a.str() + " vs " + b.str());
  }
}

void require_single_channel(const Shape& s, const char* what) {
  if (s.c != 1) throw Error(ErrorKind::ShapeMismatch, std::string(what) + " must have one channel, got " + s.str());
}

Tensor elementwise_max(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
  return out;
}

/// Averages a per-sample [N,1,1,1] quantity down to a scalar.
Var batch_mean(const Var& per_sample) { return ops::mean(per_sample); }

Tensor sobel_kernel(bool horizontal) {
  // Horizontal derivative (responds to vertical edges); vertical is its transpose.
  const double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const double ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  return Tensor(Shape{1, 1, 3, 3}, std::vector<double>(horizontal ? kx : ky, (horizontal ? kx : ky) + 9));
}

Tensor gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const int r = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  Tensor w(Shape{1, 1, size, size});
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) w.at(0, 0, i, j) = g[i] * g[j];
  }
  return w;
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

}  // namespace

Tensor illumination_weight(const Tensor& rgb, double sigma) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw Error(ErrorKind::ShapeMismatch, "illumination weight needs RGB input, got " + s.str());
  const double denom = 2.0 * sigma * sigma;
  Tensor w(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    double* out = w.plane(n, 0);
    for (int c = 0; c < 3; ++c) {
      const double* in = rgb.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double d = in[i] - 0.5;
        out[i] += std::exp(-(d * d) / denom);
      }
    }
    for (std::size_t i = 0; i < s.plane(); ++i) out[i] /= 3.0;
  }
  return w;
}

Var intensity_loss_ill(const Var& fused, const Tensor& visible_rgb, const Tensor& visible_y,
                       const Tensor& infrared, double sigma) {
  const Shape fs = fused.shape();
  require_single_channel(fs, "fused");
  require_single_channel(visible_y.shape(), "visible luminance");
  require_single_channel(infrared.shape(), "infrared");
  require_same_extent(fs, visible_rgb.shape(), "intensity loss");
  require_same_extent(fs, visible_y.shape(), "intensity loss");
  require_same_extent(fs, infrared.shape(), "intensity loss");

  Tensor weighted = illumination_weight(visible_rgb, sigma);
  for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] *= visible_y[i];
  const Var target = Var::constant(elementwise_max(weighted, infrared));
  const Var residual = ops::sub(fused, target);
  const double inv_hw = 1.0 / static_cast<double>(fs.plane());
  return batch_mean(ops::mul_scalar(ops::sqrt(ops::sum_per_sample(ops::square(residual))), inv_hw));
}

Var exposure_loss(const Var& fused, int patch, double level) {
  require_single_channel(fused.shape(), "fused");
  return ops::mean(ops::abs(ops::add_scalar(ops::block_mean(fused, patch), -level)));
}

Var sobel_magnitude(const Var& image) {
  const Shape s = image.shape();
  if (s.h < 3 || s.w < 3) throw Error(ErrorKind::TooSmall, "Sobel needs at least 3x3, got " + s.str());
  return ops::add(ops::abs(ops::filter2d(image, sobel_kernel(true), ops::Padding::Reflect)),
                  ops::abs(ops::filter2d(image, sobel_kernel(false), ops::Padding::Reflect)));
}

Var gradient_loss(const Var& fused, const Tensor& visible_y, const Tensor& infrared) {
  const Shape fs = fused.shape();
  require_single_channel(fs, "fused");
  if (!(visible_y.shape() == fs) || !(infrared.shape() == fs)) {
    throw Error(ErrorKind::ShapeMismatch, "gradient loss: " + fs.str() + ", " + visible_y.shape().str() + ", " +
                                              infrared.shape().str());
  }
  Tensor target;
  {
    NoGradGuard no_grad;
    target = elementwise_max(sobel_magnitude(Var::constant(visible_y)).value(),
                             sobel_magnitude(Var::constant(infrared)).value());
  }
  const Var diff = ops::abs(ops::sub(sobel_magnitude(fused), Var::constant(std::move(target))));
  return batch_mean(ops::mul_scalar(ops::sum_per_sample(diff), 1.0 / static_cast<double>(fs.plane())));
}

Var ssim(const Var& x, const Tensor& reference) {
  const Shape s = x.shape();
  if (!(reference.shape() == s)) {
    throw Error(ErrorKind::ShapeMismatch, "ssim: " + s.str() + " vs " + reference.shape().str());
  }
  if (s.h < kSsimWindow || s.w < kSsimWindow) {
    throw Error(ErrorKind::TooSmall, "SSIM needs at least 11x11, got " + s.str());
  }
  static const Tensor window = gaussian_window(kSsimWindow, kSsimSigma);
  auto blur = [](const Var& v) { return ops::filter2d(v, window, ops::Padding::Valid); };

  const Var y = Var::constant(reference);
  const Var mu_x = blur(x);
  const Var mu_y = blur(y);
  const Var mu_xx = ops::square(mu_x);
  const Var mu_yy = ops::square(mu_y);
  const Var mu_xy = ops::mul(mu_x, mu_y);
  const Var var_x = ops::sub(blur(ops::square(x)), mu_xx);
  const Var var_y = ops::sub(blur(ops::square(y)), mu_yy);
  const Var cov = ops::sub(blur(ops::mul(x, y)), mu_xy);

  const Var numerator = ops::mul(ops::add_scalar(ops::mul_scalar(mu_xy, 2.0), kSsimC1),
                                 ops::add_scalar(ops::mul_scalar(cov, 2.0), kSsimC2));
  const Var denominator = ops::mul(ops::add_scalar(ops::add(mu_xx, mu_yy), kSsimC1),
                                   ops::add_scalar(ops::add(var_x, var_y), kSsimC2));
  return ops::mean(ops::div(numerator, denominator));
}

Var ssim_loss(const Var& fused, const Tensor& visible_y, const Tensor& infrared) {
  const Var to_vis = ops::mul_scalar(ops::one_minus(ssim(fused, visible_y)), 0.5);
  const Var to_ir = ops::mul_scalar(ops::one_minus(ssim(fused, infrared)), 0.5);
  return ops::add(to_vis, to_ir);
}

LossReport LossTerms::report() const {
  return LossReport{grad.value()[0], ssim.value()[0], int_ill.value()[0], exp.value()[0], total.value()[0]};
}

LossTerms total_loss(const LossInputs& in, const FusionConfig& config) {
  LossTerms t;
  t.grad = gradient_loss(in.fused, in.visible_y, in.infrared);
  t.ssim = ssim_loss(in.fused, in.visible_y, in.infrared);
  t.int_ill = intensity_loss_ill(in.fused, in.visible_rgb, in.visible_y, in.infrared, config.sigma);
  t.exp = exposure_loss(in.fused, config.exposure_patch, config.exposure_level);

  Var total = Var::constant(Tensor::scalar(0.0));
  if (config.use_grad) total = ops::add(total, t.grad);
  if (config.use_ssim) total = ops::add(total, ops::mul_scalar(t.ssim, config.alpha));
  if (config.use_ill_loss) {
    Var ill = Var::constant(Tensor::scalar(0.0));
    if (config.use_int_ill) ill = ops::add(ill, t.int_ill);
    if (config.use_exp) ill = ops::add(ill, ops::mul_scalar(t.exp, config.eta));
    total = ops::add(total, ops::mul_scalar(ill, config.beta));
  }
  t.total = total;
  return t;
}

}  // namespace amfusion
