#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "err/tensor.hpp"

namespace fixture {

/// Deterministic [C, H, W] test scene in [0, 1]: a few smooth waves, a
/// bright rectangle and mild texture.
inline err::Tensor scene(unsigned seed, std::size_t C, std::size_t H, std::size_t W) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> v(C * H * W);
    const double fx = 1.0 + 3.0 * U(rng), fy = 1.0 + 3.0 * U(rng), ph = 6.28 * U(rng);
    const std::size_t r0 = static_cast<std::size_t>(U(rng) * H / 2), c0 = static_cast<std::size_t>(U(rng) * W / 2);
    for (std::size_t c = 0; c < C; ++c) {
        const double base = 0.3 + 0.3 * U(rng);
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double x = base + 0.2 * std::sin(fx * 6.283 * static_cast<double>(i) / static_cast<double>(H) + ph) *
                                      std::cos(fy * 6.283 * static_cast<double>(j) / static_cast<double>(W));
                if (i >= r0 && i < r0 + H / 3 && j >= c0 && j < c0 + W / 3) x += 0.25;
                x += 0.05 * (U(rng) - 0.5);
                v[(c * H + i) * W + j] = std::clamp(x, 0.0, 1.0);
            }
    }
    return err::Tensor(err::Shape{C, H, W}, std::move(v));
}

/// Brightness-dominated darkening: gain * x^gamma.
inline err::Tensor darken(const err::Tensor& gt, double gain, double gamma) {
    std::vector<double> v(gt.vec());
    for (auto& x : v) x = std::pow(gain * x, gamma);
    return err::Tensor(gt.shape(), std::move(v));
}

inline err::Tensor random_image(unsigned seed, const err::Shape& s) {
    std::mt19937_64 rng(seed);
    return err::Tensor::uniform(s, rng, 0.0, 1.0);
}

}  // namespace fixture
