#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "err/image.hpp"

// Synthetic degradations for desk-scale experiments. Inputs are [3, H, W] in [0, 1].
namespace err::synth {

enum class Kind { Lowlight, Rain, Blur, Haze };

/// Accepts lowlight, rain, blur or haze; throws std::invalid_argument otherwise.
Kind parse_kind(const std::string& name);
std::string kind_name(Kind kind);

/// (gain * x)^gamma plus N(0, noise_sd^2), clamped.
Tensor lowlight(const Tensor& gt, double gain, double gamma, double noise_sd, std::mt19937_64& rng);
/// x * t + airlight * (1 - t), clamped.
Tensor haze(const Tensor& gt, double transmission, double airlight);
/// Separable Gaussian blur with edge clamping.
Tensor gaussian_blur(const Tensor& gt, double sigma);
/// Additive straight streaks at `angle_deg` from the horizontal; `density` is
/// streaks per 1000 pixels.
Tensor rain(const Tensor& gt, double angle_deg, double density, double intensity, std::mt19937_64& rng);

/// Draws degradation parameters from `seed` and applies them.
ImagePair degrade(const Tensor& gt, Kind kind, std::uint64_t seed, const std::string& id = "");

}  // namespace err::synth
