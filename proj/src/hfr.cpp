#include "err/hfr.hpp"

#include <cmath>
#include <numbers>

#include "err/spectral.hpp"

namespace err::hfr {

namespace {

struct RationalEval {
    double value;
    double dx;
    double q;
    double sign;  // sign of the denominator polynomial
    double p;
};

RationalEval evaluate(double x, const double* a, std::size_t na, const double* b, std::size_t nb) {
    double p = 0.0, dp = 0.0;
    for (std::size_t i = na; i-- > 0;) {
        dp = dp * x + p;
        p = p * x + a[i];
    }
    double s = 0.0, ds = 0.0;
    for (std::size_t j = nb; j-- > 0;) {
        ds = ds * x + s;
        s = s * x + b[j];
    }
    // Horner above built sum b_j x^j for j = 0..nb-1; shift by one power.
    ds = ds * x + s;
    s = s * x;
    const double sign = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    const double q = 1.0 + std::abs(s);
    return {p / q, dp / q - p * sign * ds / (q * q), q, sign, p};
}

}  // namespace

Tensor rational_act(const Tensor& x, const Tensor& a, const Tensor& b) {
    if (x.rank() < 2) throw ShapeError("rational_act: expected [N, C, ...], got " + shape_str(x.shape()));
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw ShapeError("rational_act: coefficient tables " + shape_str(a.shape()) + ", " + shape_str(b.shape()));
    }
    const std::size_t C = x.dim(1), G = a.dim(0), na = a.dim(1), nb = b.dim(1);
    if (G == 0 || C % G != 0) {
        throw std::invalid_argument("rational_act: " + std::to_string(G) + " groups do not divide " +
                                    std::to_string(C) + " channels");
    }
    const std::size_t per_group = C / G;
    std::size_t inner = 1;
    for (std::size_t d = 2; d < x.rank(); ++d) inner *= x.dim(d);
    const auto& xv = x.vec();
    const auto& av = a.vec();
    const auto& bv = b.vec();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const std::size_t g = (i / inner) % C / per_group;
        out[i] = evaluate(xv[i], &av[g * na], na, &bv[g * nb], nb).value;
    }
    return make_result(x.shape(), std::move(out), {x, a, b}, [=](const detail::Node& o) {
        const auto& xv = x.vec();
        const auto& av = a.vec();
        const auto& bv = b.vec();
        std::vector<double> gx(xv.size()), ga(av.size(), 0.0), gb(bv.size(), 0.0);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const std::size_t g = (i / inner) % C / per_group;
            const double xi = xv[i], gy = o.grad[i];
            const RationalEval r = evaluate(xi, &av[g * na], na, &bv[g * nb], nb);
            gx[i] = gy * r.dx;
            double pw = 1.0;
            for (std::size_t k = 0; k < na; ++k, pw *= xi) ga[g * na + k] += gy * pw / r.q;
            const double common = -gy * r.p * r.sign / (r.q * r.q);
            pw = xi;
            for (std::size_t k = 0; k < nb; ++k, pw *= xi) gb[g * nb + k] += common * pw;
        }
        accumulate_grad(x, gx);
        accumulate_grad(a, ga);
        accumulate_grad(b, gb);
    });
}

std::vector<double> gelu_fit_numerator() {
    return {-0.00058046, 0.50995811, 0.42878159, 0.06518333, -0.02908377, -0.00738134};
}

std::vector<double> gelu_fit_denominator() { return {0.08606185, 0.06444931, 0.01565585, -0.01557578}; }

double rational_second_moment(const std::vector<double>& a, const std::vector<double>& b) {
    // Trapezoid rule against the standard normal density; tails beyond 10 sd are negligible.
    const int steps = 8000;
    const double lo = -10.0, hi = 10.0, dx = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double x = lo + dx * i;
        const double phi = evaluate(x, a.data(), a.size(), b.data(), b.size()).value;
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
        acc += w * phi * phi * std::exp(-0.5 * x * x);
    }
    return acc * dx / std::sqrt(2.0 * std::numbers::pi);
}

GrKanLayer GrKanLayer::make(std::size_t channels, std::size_t groups, std::mt19937_64& rng, std::size_t m,
                            std::size_t n) {
    if (groups == 0 || channels % groups != 0) {
        throw std::invalid_argument("gr_kan: " + std::to_string(groups) + " groups do not divide " +
                                    std::to_string(channels) + " channels");
    }
    if (m < 1) throw std::invalid_argument("gr_kan: numerator degree must be at least 1");
    std::vector<double> na(m + 1, 0.0), nb(n, 0.0);
    if (m == 5 && n == 4) {
        na = gelu_fit_numerator();
        nb = gelu_fit_denominator();
    } else {
        na[1] = 1.0;
    }
    std::vector<double> a, b;
    for (std::size_t g = 0; g < groups; ++g) {
        a.insert(a.end(), na.begin(), na.end());
        b.insert(b.end(), nb.begin(), nb.end());
    }
    GrKanLayer layer;
    layer.a = Tensor(Shape{groups, na.size()}, std::move(a), true);
    layer.b = Tensor(Shape{groups, nb.size()}, std::move(b), true);
    // Output variance matches input variance for unit-normal inputs.
    const double sd = 1.0 / std::sqrt(static_cast<double>(channels) * rational_second_moment(na, nb));
    layer.weight = nn::normal({channels, channels}, sd, rng);
    return layer;
}

void GrKanLayer::visit(const std::string& prefix, const nn::Visitor& fn) {
    fn(nn::join(prefix, "a"), a);
    fn(nn::join(prefix, "b"), b);
    fn(nn::join(prefix, "weight"), weight);
}

Tensor gr_kan_layer(const Tensor& x, const GrKanLayer& layer) {
    Tensor phi = rational_act(x, layer.a, layer.b);
    if (x.rank() == 2) return matmul(phi, transpose_last(layer.weight));
    if (x.rank() == 4) return conv2d_pointwise(phi, layer.weight);
    throw ShapeError("gr_kan_layer: expected [tokens, C] or [N, C, h, w], got " + shape_str(x.shape()));
}

SpectralPath spectral_path(const Tensor& x, std::size_t w, const WindowFn& fn) {
    if (x.rank() != 4) throw ShapeError("spectral_path: expected [B,C,H,W], got " + shape_str(x.shape()));
    if (w == 0) throw ShapeError("spectral_path: window must be positive");
    const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);
    const std::size_t ph = (w - H % w) % w, pw = (w - W % w) % w;
    Tensor padded = (ph || pw) ? reflect_pad(x, ph, pw) : x;
    SpectralPath r;
    r.spectrum = spectral::dct2(padded).coeffs;
    r.windows = spectral::window_partition(r.spectrum, w);
    r.spectrum_out = spectral::window_reverse(fn(r.windows), w, B, H + ph, W + pw);
    Tensor spatial = spectral::idct2({r.spectrum_out});
    r.output = (ph || pw) ? crop(spatial, H, W) : spatial;
    return r;
}

Tensor fw_kan(const Tensor& windows, const std::vector<GrKanLayer>& layers) {
    Tensor t = windows;
    for (const auto& l : layers) t = gr_kan_layer(t, l);
    return t;
}

HfrParams HfrParams::make(std::size_t c, std::size_t n_blocks, std::size_t layers, std::size_t groups,
                          std::size_t window, std::mt19937_64& rng, std::size_t m, std::size_t n) {
    HfrParams p;
    p.window = window;
    p.embed = nn::Embed::make(c, rng);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        std::vector<GrKanLayer> block;
        for (std::size_t i = 0; i < layers; ++i) block.push_back(GrKanLayer::make(c, groups, rng, m, n));
        p.blocks.push_back(std::move(block));
    }
    p.head = nn::Pointwise::zeros(c, 3);
    return p;
}

void HfrParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    embed.visit(nn::join(prefix, "embed"), fn);
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t i = 0; i < blocks[b].size(); ++i)
            blocks[b][i].visit(nn::join(prefix, "block" + std::to_string(b) + ".kan" + std::to_string(i)), fn);
    head.visit(nn::join(prefix, "head"), fn);
}

Tensor hfr_forward(const Tensor& image, const Tensor& feat_s2, const Tensor& base, const HfrParams& p) {
    if (image.rank() != 4) throw ShapeError("hfr_forward: expected [B,3,H,W], got " + shape_str(image.shape()));
    const std::size_t H = image.dim(2), W = image.dim(3);
    Tensor x_high = p.embed(image);
    if (feat_s2.defined()) x_high = x_high + nn::upsample_to(feat_s2, H, W);
    for (const auto& layers : p.blocks)
        x_high = spectral_path(x_high, p.window, [&](const Tensor& win) { return fw_kan(win, layers); }).output;
    return base + p.head(x_high);
}

ParamCounts param_count_comparison(std::size_t c, std::size_t depth, std::size_t groups, std::size_t m,
                                   std::size_t n) {
    return {depth * (c * c + groups * (m + 1 + n)), depth * 3 * (c * c + c)};
}

}  // namespace err::hfr
