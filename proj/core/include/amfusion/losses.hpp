#pragma once

#include "amfusion/autograd.hpp"
#include "amfusion/datamodel.hpp"

namespace amfusion {

/// Everything the unsupervised objective looks at. `fused` carries the tape;
/// the sources are constants. All images are NxCxHxW in [0,1].
struct LossInputs {
  Var fused;           // O', Nx1xHxW
  Tensor visible_rgb;  // Nx3xHxW, for the illumination weight
  Tensor visible_y;    // I_D, Nx1xHxW
  Tensor infrared;     // I_G, Nx1xHxW
};

/// w_ill(x) = 1/3 sum_c exp(-(I^c(x) - 0.5)^2 / (2 sigma^2)); Nx1xHxW.
Tensor illumination_weight(const Tensor& visible_rgb, double sigma);

/// Per-sample (1/HW) * ||fused - max(w_ill * I_D, I_G)||_2, averaged over the
/// batch. Throws ShapeMismatch.
Var intensity_loss_ill(const Var& fused, const Tensor& visible_rgb, const Tensor& visible_y,
                       const Tensor& infrared, double sigma);

/// Mean over non-overlapping patch x patch blocks of |block mean - level|.
/// Throws PatchMismatch when the blocks do not tile the image.
Var exposure_loss(const Var& fused, int patch, double level);

/// Sobel magnitude |d/dx| + |d/dy| with reflect padding.
Var sobel_magnitude(const Var& image);

/// (1/HW) * || |grad O'| - max(|grad D|, |grad G|) ||_1, averaged over the batch.
Var gradient_loss(const Var& fused, const Tensor& visible_y, const Tensor& infrared);

/// Mean SSIM map (11x11 Gaussian window, sigma 1.5, valid filtering,
/// C1 = 0.01^2, C2 = 0.03^2); returns a scalar averaged over the batch.
/// Throws TooSmall below 11x11.
Var ssim(const Var& x, const Tensor& reference);

/// (1 - SSIM(O', D)) / 2 + (1 - SSIM(O', G)) / 2.
Var ssim_loss(const Var& fused, const Tensor& visible_y, const Tensor& infrared);

struct LossTerms {
  Var grad;
  Var ssim;
  Var int_ill;
  Var exp;
  Var total;

  LossReport report() const;
};

/// total = grad + alpha * ssim + beta * (int_ill + eta * exp). Disabled terms
/// contribute zero to the total but are still evaluated for logging.
LossTerms total_loss(const LossInputs& inputs, const FusionConfig& config);

}  // namespace amfusion
