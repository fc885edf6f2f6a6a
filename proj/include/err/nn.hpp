#pragma once

#include <functional>
#include <random>
#include <string>

#include "err/ops.hpp"

// Small building blocks shared by the three stages.
namespace err::nn {

/// Called once per trainable tensor with its dotted name.
using Visitor = std::function<void(const std::string& name, Tensor& param)>;

/// Trainable leaf drawn from N(0, sd^2).
Tensor normal(const Shape& shape, double sd, std::mt19937_64& rng);
/// Trainable leaf filled with `value`.
Tensor filled(const Shape& shape, double value);
/// Trainable [n, n] identity.
Tensor eye(std::size_t n);

/// Pointwise conv C_in -> C_out with optional bias.
struct Pointwise {
    Tensor weight;  // [C_out, C_in]
    Tensor bias;    // [C_out] or undefined

    static Pointwise make(std::size_t c_in, std::size_t c_out, std::mt19937_64& rng, bool with_bias = true);
    static Pointwise zeros(std::size_t c_in, std::size_t c_out, bool with_bias = true);
    Tensor operator()(const Tensor& x) const { return conv2d_pointwise(x, weight, bias); }
    void visit(const std::string& prefix, const Visitor& fn);
};

/// 3x3 depthwise conv with bias.
struct Depthwise {
    Tensor weight;  // [C, 3, 3]
    Tensor bias;    // [C]

    static Depthwise make(std::size_t channels, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const { return conv2d_depthwise(x, weight, bias); }
    void visit(const std::string& prefix, const Visitor& fn);
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm make(std::size_t channels);
    Tensor operator()(const Tensor& x) const { return layernorm(x, gamma, beta); }
    void visit(const std::string& prefix, const Visitor& fn);
};

/// Image embedding 3 -> C: 3x3 depthwise then pointwise.
struct Embed {
    Depthwise dw;
    Pointwise pw;

    static Embed make(std::size_t channels, std::mt19937_64& rng);
    Tensor operator()(const Tensor& image) const { return pw(dw(image)); }
    void visit(const std::string& prefix, const Visitor& fn);
};

/// Area downsampling by an integer factor.
Tensor downsample(const Tensor& x, std::size_t factor);
/// Bilinear resize to explicit extents.
Tensor upsample_to(const Tensor& x, std::size_t h, std::size_t w);

/// Counts scalars reachable through `visit`.
template <class Module>
std::size_t count_parameters(Module& m) {
    std::size_t n = 0;
    m.visit("", [&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

inline std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace err::nn
