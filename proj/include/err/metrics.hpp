#pragma once

#include "err/tensor.hpp"

namespace err {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse) on [0,1] images, capped at kPsnrCap.
double psnr_from_mse(double mse);
double psnr(const Tensor& a, const Tensor& b);
/// Mean SSIM (11x11 Gaussian, sigma 1.5, per channel). Accepts [C,H,W] or [B,C,H,W].
double ssim(const Tensor& a, const Tensor& b);

}  // namespace err
