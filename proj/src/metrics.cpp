#include "err/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "err/losses.hpp"

namespace err {

double psnr_from_mse(double mse) {
    if (!(mse > 0.0)) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("psnr: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    return psnr_from_mse(mse / static_cast<double>(a.numel()));
}

double ssim(const Tensor& a, const Tensor& b) {
    NoGradGuard ng;
    return losses::ssim_index(a.detach(), b.detach()).item();
}

}  // namespace err
