#include "err/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace err::synth {

namespace {

void require_rgb(const Tensor& gt) {
    if (gt.rank() != 3) throw ShapeError("degradations expect [C,H,W], got " + shape_str(gt.shape()));
}

Tensor clamped(const Tensor& like, std::vector<double> v) {
    for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
    return Tensor(like.shape(), std::move(v));
}

}  // namespace

Kind parse_kind(const std::string& name) {
    if (name == "lowlight") return Kind::Lowlight;
    if (name == "rain") return Kind::Rain;
    if (name == "blur") return Kind::Blur;
    if (name == "haze") return Kind::Haze;
    throw std::invalid_argument("unknown degradation '" + name + "' (lowlight|rain|blur|haze)");
}

std::string kind_name(Kind kind) {
    switch (kind) {
        case Kind::Lowlight: return "lowlight";
        case Kind::Rain: return "rain";
        case Kind::Blur: return "blur";
        case Kind::Haze: return "haze";
    }
    return "?";
}

Tensor lowlight(const Tensor& gt, double gain, double gamma, double noise_sd, std::mt19937_64& rng) {
    require_rgb(gt);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> v(gt.vec());
    for (auto& x : v) {
        x = std::pow(gain * x, gamma);
        if (noise_sd > 0) x += noise_sd * noise(rng);
    }
    return clamped(gt, std::move(v));
}

Tensor haze(const Tensor& gt, double t, double airlight) {
    require_rgb(gt);
    std::vector<double> v(gt.vec());
    for (auto& x : v) x = x * t + airlight * (1.0 - t);
    return clamped(gt, std::move(v));
}

Tensor gaussian_blur(const Tensor& gt, double sigma) {
    require_rgb(gt);
    const std::size_t C = gt.dim(0), H = gt.dim(1), W = gt.dim(2);
    const long r = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
    double z = 0.0;
    for (long i = -r; i <= r; ++i) z += taps[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& t : taps) t /= z;
    const auto& src = gt.vec();
    std::vector<double> tmp(src.size()), out(src.size());
    auto at = [](long i, std::size_t n) { return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1)); };
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double s = 0.0;
                for (long d = -r; d <= r; ++d) s += taps[static_cast<std::size_t>(d + r)] * src[(c * H + y) * W + at(static_cast<long>(x) + d, W)];
                tmp[(c * H + y) * W + x] = s;
            }
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double s = 0.0;
                for (long d = -r; d <= r; ++d) s += taps[static_cast<std::size_t>(d + r)] * tmp[(c * H + at(static_cast<long>(y) + d, H)) * W + x];
                out[(c * H + y) * W + x] = s;
            }
    return clamped(gt, std::move(out));
}

Tensor rain(const Tensor& gt, double angle_deg, double density, double intensity, std::mt19937_64& rng) {
    require_rgb(gt);
    const std::size_t C = gt.dim(0), H = gt.dim(1), W = gt.dim(2);
    std::vector<double> layer(H * W, 0.0);
    const auto streaks = static_cast<std::size_t>(density * static_cast<double>(H * W) / 1000.0);
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double max_len = std::max(4.0, 0.15 * static_cast<double>(std::min(H, W)));
    for (std::size_t s = 0; s < streaks; ++s) {
        const double x0 = U(rng) * static_cast<double>(W), y0 = U(rng) * static_cast<double>(H);
        const double len = max_len * (0.5 + 0.5 * U(rng));
        const double a = intensity * (0.6 + 0.4 * U(rng));
        for (double t = 0; t < len; t += 0.5) {
            const long x = std::lround(x0 + t * dx), y = std::lround(y0 + t * dy);
            if (x < 0 || y < 0 || x >= static_cast<long>(W) || y >= static_cast<long>(H)) continue;
            double& px = layer[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
            px = std::max(px, a);
        }
    }
    std::vector<double> v(gt.vec());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i) v[c * H * W + i] += layer[i];
    return clamped(gt, std::move(v));
}

ImagePair degrade(const Tensor& gt, Kind kind, std::uint64_t seed, const std::string& id) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto in = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
    Tensor out;
    switch (kind) {
        case Kind::Lowlight: {
            const double gamma = in(2.0, 3.0), gain = in(0.2, 0.5);
            out = lowlight(gt, gain, gamma, 0.02, rng);
            break;
        }
        case Kind::Rain: {
            const double angle = in(70.0, 110.0), density = in(2.0, 6.0), intensity = in(0.3, 0.7);
            out = rain(gt, angle, density, intensity, rng);
            break;
        }
        case Kind::Blur: out = gaussian_blur(gt, in(1.5, 3.0)); break;
        case Kind::Haze: {
            const double t = in(0.3, 0.6), airlight = in(0.8, 1.0);
            out = haze(gt, t, airlight);
            break;
        }
    }
    return {out, Tensor(gt.shape(), gt.vec()), id};
}

}  // namespace err::synth
