#include "err/nn.hpp"

#include <cmath>

namespace err::nn {

Tensor normal(const Shape& shape, double sd, std::mt19937_64& rng) {
    Tensor t = Tensor::randn(shape, rng, sd);
    t.set_requires_grad(true);
    return t;
}

Tensor filled(const Shape& shape, double value) {
    Tensor t(shape, value);
    t.set_requires_grad(true);
    return t;
}

Tensor eye(std::size_t n) {
    Tensor t(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0;
    t.set_requires_grad(true);
    return t;
}

Pointwise Pointwise::make(std::size_t c_in, std::size_t c_out, std::mt19937_64& rng, bool with_bias) {
    Pointwise p;
    p.weight = normal({c_out, c_in}, 1.0 / std::sqrt(static_cast<double>(c_in)), rng);
    if (with_bias) p.bias = filled({c_out}, 0.0);
    return p;
}

Pointwise Pointwise::zeros(std::size_t c_in, std::size_t c_out, bool with_bias) {
    Pointwise p;
    p.weight = filled({c_out, c_in}, 0.0);
    if (with_bias) p.bias = filled({c_out}, 0.0);
    return p;
}

void Pointwise::visit(const std::string& prefix, const Visitor& fn) {
    fn(join(prefix, "weight"), weight);
    if (bias.defined()) fn(join(prefix, "bias"), bias);
}

Depthwise Depthwise::make(std::size_t channels, std::mt19937_64& rng) {
    Depthwise d;
    d.weight = normal({channels, 3, 3}, 1.0 / 3.0, rng);
    d.bias = filled({channels}, 0.0);
    return d;
}

void Depthwise::visit(const std::string& prefix, const Visitor& fn) {
    fn(join(prefix, "weight"), weight);
    fn(join(prefix, "bias"), bias);
}

LayerNorm LayerNorm::make(std::size_t channels) {
    return LayerNorm{filled({channels}, 1.0), filled({channels}, 0.0)};
}

void LayerNorm::visit(const std::string& prefix, const Visitor& fn) {
    fn(join(prefix, "gamma"), gamma);
    fn(join(prefix, "beta"), beta);
}

Embed Embed::make(std::size_t channels, std::mt19937_64& rng) {
    return Embed{Depthwise::make(3, rng), Pointwise::make(3, channels, rng)};
}

void Embed::visit(const std::string& prefix, const Visitor& fn) {
    dw.visit(join(prefix, "dw"), fn);
    pw.visit(join(prefix, "pw"), fn);
}

Tensor downsample(const Tensor& x, std::size_t factor) {
    const std::size_t H = x.dim(2), W = x.dim(3);
    if (H % factor != 0 || W % factor != 0) {
        throw ShapeError("downsample: " + shape_str(x.shape()) + " is not divisible by " + std::to_string(factor));
    }
    return avgpool2d(x, H / factor, W / factor);
}

Tensor upsample_to(const Tensor& x, std::size_t h, std::size_t w) {
    if (x.dim(2) == h && x.dim(3) == w) return x;
    return bilinear_resize(x, h, w);
}

}  // namespace err::nn
