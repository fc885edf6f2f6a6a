#pragma once

#include <functional>
#include <vector>

#include "err/nn.hpp"

// Stage 3: group-rational KAN applied inside windows of the DCT spectrum.
namespace err::hfr {

/// P(x) / (1 + |b_1 x + ... + b_n x^n|) per element, with coefficients shared
/// inside each channel group. x: [N, C, ...]; a: [groups, m+1]; b: [groups, n].
Tensor rational_act(const Tensor& x, const Tensor& a, const Tensor& b);

/// Degree-[5/4] fit of tanh-GELU on [-3, 3], used as the starting activation.
std::vector<double> gelu_fit_numerator();
std::vector<double> gelu_fit_denominator();

struct GrKanLayer {
    Tensor a;       // [groups, m+1]
    Tensor b;       // [groups, n]
    Tensor weight;  // [C, C], no bias

    /// Starts from the gelu fit for degrees [5/4]; other degrees start at the identity.
    static GrKanLayer make(std::size_t channels, std::size_t groups, std::mt19937_64& rng,
                           std::size_t num_degree = 5, std::size_t den_degree = 4);
    std::size_t groups() const { return a.dim(0); }
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

/// Mixes channels after the rational activation. x is [tokens, C] or [N, C, h, w].
Tensor gr_kan_layer(const Tensor& x, const GrKanLayer& layer);

/// E[phi(x)^2] for x ~ N(0, 1) under the given coefficients.
double rational_second_moment(const std::vector<double>& a, const std::vector<double>& b);

using WindowFn = std::function<Tensor(const Tensor& windows)>;

/// Intermediates of pad -> DCT -> window partition -> fn -> window reverse -> IDCT -> crop.
struct SpectralPath {
    Tensor spectrum;      // DCT of the padded input
    Tensor windows;       // partitioned spectrum fed to fn
    Tensor spectrum_out;  // reassembled after fn
    Tensor output;        // cropped spatial result
};

SpectralPath spectral_path(const Tensor& x, std::size_t window, const WindowFn& fn);

struct HfrParams {
    std::size_t window = 8;
    nn::Embed embed;
    /// Chained FW-KAN blocks; each is pad -> DCT -> windows -> layers -> back.
    std::vector<std::vector<GrKanLayer>> blocks;
    nn::Pointwise head;  // zero-initialised

    static HfrParams make(std::size_t channels, std::size_t n_blocks, std::size_t layers, std::size_t groups,
                          std::size_t window, std::mt19937_64& rng, std::size_t num_degree = 5,
                          std::size_t den_degree = 4);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

Tensor fw_kan(const Tensor& windows, const std::vector<GrKanLayer>& layers);

/// `feat_s2` may be undefined; `base` is the image the head output is added to.
Tensor hfr_forward(const Tensor& image, const Tensor& feat_s2, const Tensor& base, const HfrParams& p);

struct ParamCounts {
    std::size_t kan = 0;
    std::size_t mlp = 0;
};

/// Operator-only counts at equal depth: `depth` GR-KAN layers versus `depth`
/// linear-ReLU-linear-ReLU-linear units (biased linears) of the same width.
ParamCounts param_count_comparison(std::size_t channels, std::size_t depth, std::size_t groups,
                                   std::size_t num_degree = 5, std::size_t den_degree = 4);

}  // namespace err::hfr
