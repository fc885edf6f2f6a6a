#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the adjoint code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "err/ops.hpp"
#include "err/tensor.hpp"

namespace oracle {

using err::Tensor;

struct GradReport {
    double rel = 0.0;       // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double max_abs = 0.0;
    double analytic_norm = 0.0;
};

/// Central differences of a scalar function of `param`, step h * max(1, |x|).
inline std::vector<double> numeric_gradient(const std::function<Tensor()>& loss, Tensor param,
                                            double h = 1e-6) {
    err::NoGradGuard ng;
    auto data = param.mutable_data();
    std::vector<double> g(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double x0 = data[i];
        const double step = h * std::max(1.0, std::abs(x0));
        data[i] = x0 + step;
        const double fp = loss().item();
        data[i] = x0 - step;
        const double fm = loss().item();
        data[i] = x0;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

inline GradReport compare(const std::vector<double>& a, const std::vector<double>& n) {
    GradReport r;
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
        r.max_abs = std::max(r.max_abs, std::abs(a[i] - n[i]));
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
    r.rel = (na == 0.0 && nn == 0.0) ? 0.0 : std::sqrt(diff) / denom;
    r.analytic_norm = std::sqrt(na);
    return r;
}

/// Analytic gradient of `loss` w.r.t. each tensor in `params` against central differences.
/// Returns the worst relative error.
inline double check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                              double h = 1e-6) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tensor l = loss();
    err::backward(l);
    double worst = 0.0;
    for (auto& p : params) {
        const auto analytic = p.grad();
        const auto numeric = numeric_gradient(loss, p, h);
        worst = std::max(worst, compare(analytic, numeric).rel);
    }
    return worst;
}

/// Like check_gradients but probes at most `per_tensor` random entries of each
/// parameter. Tensors whose probed gradients are all below `floor` in norm count
/// as matching when the numeric side is below `floor` too.
inline double check_gradients_sampled(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                      std::size_t per_tensor, unsigned seed = 5, double h = 1e-6,
                                      double floor = 1e-8) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    err::backward(loss());
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    err::NoGradGuard ng;
    for (auto& p : params) {
        const auto g = p.grad();
        auto data = p.mutable_data();
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        std::vector<double> analytic, numeric;
        for (std::size_t s = 0; s < std::min(per_tensor, data.size()); ++s) {
            const std::size_t i = per_tensor >= data.size() ? s : pick(rng);
            const double x0 = data[i];
            const double step = h * std::max(1.0, std::abs(x0));
            data[i] = x0 + step;
            const double fp = loss().item();
            data[i] = x0 - step;
            const double fm = loss().item();
            data[i] = x0;
            analytic.push_back(g[i]);
            numeric.push_back((fp - fm) / (2.0 * step));
        }
        const GradReport r = compare(analytic, numeric);
        double nn = 0.0;
        for (double v : numeric) nn += v * v;
        if (r.analytic_norm < floor && std::sqrt(nn) < floor) continue;
        worst = std::max(worst, r.rel);
    }
    return worst;
}

/// Fixed random weighting so a tensor-valued op becomes a smooth scalar.
inline Tensor probe_weights(const err::Shape& shape, unsigned seed = 99) {
    std::mt19937_64 rng(seed);
    return Tensor::uniform(shape, rng, -1.0, 1.0);
}

inline Tensor weighted_sum(const Tensor& y, const Tensor& w) { return err::sum(err::mul(y, w)); }

// ---------------------------------------------------------------------------
// Direct-summation orthonormal DCT-II, O((HW)^2) per plane.

inline double dct_alpha(std::size_t k, std::size_t n) {
    return k == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
}

inline std::vector<double> naive_dct2_plane(const std::vector<double>& x, std::size_t H,
                                            std::size_t W) {
    const double pi = std::numbers::pi;
    std::vector<double> F(H * W, 0.0);
    for (std::size_t u = 0; u < H; ++u)
        for (std::size_t v = 0; v < W; ++v) {
            double s = 0.0;
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w)
                    s += x[h * W + w] *
                         std::cos((2.0 * static_cast<double>(h) + 1.0) * static_cast<double>(u) * pi /
                                  (2.0 * static_cast<double>(H))) *
                         std::cos((2.0 * static_cast<double>(w) + 1.0) * static_cast<double>(v) * pi /
                                  (2.0 * static_cast<double>(W)));
            F[u * W + v] = dct_alpha(u, H) * dct_alpha(v, W) * s;
        }
    return F;
}

inline std::vector<double> naive_idct2_plane(const std::vector<double>& F, std::size_t H,
                                             std::size_t W) {
    const double pi = std::numbers::pi;
    std::vector<double> x(H * W, 0.0);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
            double s = 0.0;
            for (std::size_t u = 0; u < H; ++u)
                for (std::size_t v = 0; v < W; ++v)
                    s += dct_alpha(u, H) * dct_alpha(v, W) * F[u * W + v] *
                         std::cos((2.0 * static_cast<double>(h) + 1.0) * static_cast<double>(u) * pi /
                                  (2.0 * static_cast<double>(H))) *
                         std::cos((2.0 * static_cast<double>(w) + 1.0) * static_cast<double>(v) * pi /
                                  (2.0 * static_cast<double>(W)));
            x[h * W + w] = s;
        }
    return x;
}

// ---------------------------------------------------------------------------
// Reference image metrics: explicit 11x11 window loops, zero padding outside the image.

inline double reference_psnr(const std::vector<double>& a, const std::vector<double>& b) {
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

/// Mean SSIM over planes of size HxW stored contiguously.
inline double reference_ssim(const std::vector<double>& a, const std::vector<double>& b,
                             std::size_t planes, std::size_t H, std::size_t W) {
    constexpr int R = 5;
    constexpr double sigma = 1.5;
    double g[2 * R + 1];
    double gs = 0.0;
    for (int i = -R; i <= R; ++i) gs += (g[i + R] = std::exp(-(i * i) / (2.0 * sigma * sigma)));
    for (double& v : g) v /= gs;
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total = 0.0;
    const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* x = a.data() + p * H * W;
        const double* y = b.data() + p * H * W;
        for (long i = 0; i < Hl; ++i)
            for (long j = 0; j < Wl; ++j) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int di = -R; di <= R; ++di)
                    for (int dj = -R; dj <= R; ++dj) {
                        const long ii = i + di, jj = j + dj;
                        if (ii < 0 || ii >= Hl || jj < 0 || jj >= Wl) continue;
                        const double wgt = g[di + R] * g[dj + R];
                        const double xv = x[ii * Wl + jj], yv = y[ii * Wl + jj];
                        mx += wgt * xv;
                        my += wgt * yv;
                        sxx += wgt * xv * xv;
                        syy += wgt * yv * yv;
                        sxy += wgt * xv * yv;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                total += ((2 * mx * my + C1) * (2 * cxy + C2)) /
                         ((mx * mx + my * my + C1) * (vx + vy + C2));
            }
    }
    return total / static_cast<double>(planes * H * W);
}

}  // namespace oracle
