#include <doctest.h>

#include <cmath>

#include "err/hfr.hpp"
#include "err/spectral.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace err;
using namespace err::hfr;

namespace {

double gelu_ref(double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

Tensor coeffs(std::size_t groups, std::vector<double> row) {
    std::vector<double> v;
    for (std::size_t g = 0; g < groups; ++g) v.insert(v.end(), row.begin(), row.end());
    return Tensor(Shape{groups, row.size()}, std::move(v));
}

}  // namespace

TEST_SUITE("hfr") {

TEST_CASE("rational activation special cases") {
    Tensor x = fixture::random_image(1, {2, 4, 3, 3});
    Tensor y = rational_act(x, coeffs(2, {0, 1, 0, 0, 0, 0}), coeffs(2, {0, 0, 0, 0}));
    CHECK(y.vec() == x.vec());
    for (double v : rational_act(x, coeffs(4, {0.7, 0, 0, 0, 0, 0}), coeffs(4, {0, 0, 0, 0})).vec())
        CHECK(v == 0.7);
    CHECK_THROWS_AS(rational_act(x, coeffs(3, {0, 1}), coeffs(3, {0})), std::invalid_argument);
}

TEST_CASE("groups share coefficients exactly") {
    Tensor x(Shape{1, 4, 1, 1}, 0.8);
    Tensor a(Shape{2, 3}, std::vector<double>{0.1, 1.0, 0.5, -0.2, 0.3, 0.0});
    Tensor b(Shape{2, 1}, std::vector<double>{0.5, -0.1});
    Tensor y = rational_act(x, a, b);
    CHECK(y[0] == y[1]);
    CHECK(y[2] == y[3]);
    CHECK(y[0] != y[2]);
    CHECK(y[0] == doctest::Approx((0.1 + 0.8 + 0.5 * 0.64) / (1 + 0.4)).epsilon(1e-15));
}

TEST_CASE("rational activation has no poles") {
    std::vector<double> xs;
    for (int i = -2000; i <= 2000; ++i) xs.push_back(0.5 * i);
    Tensor x(Shape{1, 4, 1, xs.size() / 4 + 0}, std::vector<double>(xs.begin(), xs.begin() + static_cast<long>(4 * (xs.size() / 4))));
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = Tensor::randn({2, 6}, rng, 1.0), b = Tensor::randn({2, 4}, rng, 1.0);
        Tensor y = rational_act(x, a, b);
        for (std::size_t i = 0; i < y.numel(); ++i) {
            CHECK(std::isfinite(y[i]));
            const std::size_t g = (i / x.dim(3)) / 2;
            double p = 0.0;
            for (std::size_t k = 6; k-- > 0;) p = p * x[i] + a[g * 6 + k];
            CHECK(std::abs(y[i]) <= std::abs(p) * (1 + 1e-12));
        }
    }
}

TEST_CASE("rational activation gradient wrt input and coefficients") {
    std::mt19937_64 rng(3);
    Tensor x = Tensor::randn({3, 4, 2, 2}, rng, 1.0);
    Tensor a = Tensor::randn({2, 6}, rng, 0.5), b = Tensor::randn({2, 4}, rng, 0.5);
    Tensor R = oracle::probe_weights(x.shape());
    CHECK(oracle::check_gradients([&] { return oracle::weighted_sum(rational_act(x, a, b), R); }, {x, a, b}) < 1e-4);
}

TEST_CASE("initial coefficients approximate gelu") {
    Tensor x(Shape{1, 1, 601}, 0.0);
    for (std::size_t i = 0; i < 601; ++i) x.mutable_data()[i] = -3.0 + 0.01 * static_cast<double>(i);
    Tensor a(Shape{1, 6}, gelu_fit_numerator()), b(Shape{1, 4}, gelu_fit_denominator());
    Tensor y = rational_act(x, a, b);
    double worst = 0.0;
    for (std::size_t i = 0; i < 601; ++i) worst = std::max(worst, std::abs(y[i] - gelu_ref(x[i])));
    CHECK(worst < 1e-2);
}

TEST_CASE("gr-kan layer count, zero weights and variance") {
    std::mt19937_64 rng(4);
    GrKanLayer layer = GrKanLayer::make(32, 8, rng);
    CHECK(nn::count_parameters(layer) == 1104);
    CHECK_THROWS_AS(GrKanLayer::make(32, 5, rng), std::invalid_argument);

    for (unsigned seed = 0; seed < 10; ++seed) {
        std::mt19937_64 r(100 + seed);
        GrKanLayer l = GrKanLayer::make(32, 8, r);
        Tensor x = Tensor::randn({4096, 32}, r, 1.0);
        Tensor y = gr_kan_layer(x, l);
        double m = 0.0, s = 0.0;
        for (double v : y.vec()) m += v;
        m /= static_cast<double>(y.numel());
        for (double v : y.vec()) s += (v - m) * (v - m);
        const double var = s / static_cast<double>(y.numel());
        CHECK(var >= 0.5);
        CHECK(var <= 2.0);
    }

    for (auto& v : layer.weight.mutable_data()) v = 0.0;
    Tensor x = Tensor::randn({10, 32}, rng, 1.0);
    for (double v : gr_kan_layer(x, layer).vec()) CHECK(v == 0.0);
}

TEST_CASE("gr-kan layer and stack gradients") {
    std::mt19937_64 rng(5);
    std::vector<GrKanLayer> layers{GrKanLayer::make(4, 2, rng), GrKanLayer::make(4, 2, rng)};
    Tensor tokens = Tensor::randn({5, 4}, rng, 1.0);
    Tensor windows = Tensor::randn({3, 4, 2, 2}, rng, 1.0);
    std::vector<Tensor> params{tokens};
    for (auto& l : layers) l.visit("", [&](const std::string&, Tensor& t) { params.push_back(t); });
    Tensor R1 = oracle::probe_weights(tokens.shape());
    CHECK(oracle::check_gradients([&] { return oracle::weighted_sum(gr_kan_layer(tokens, layers[0]), R1); }, params) < 1e-3);
    params[0] = windows;
    Tensor R2 = oracle::probe_weights(windows.shape());
    CHECK(oracle::check_gradients([&] { return oracle::weighted_sum(fw_kan(windows, layers), R2); }, params) < 1e-3);
}

TEST_CASE("window partition and reverse through the spectral path are exact") {
    for (auto [H, W] : {std::pair<std::size_t, std::size_t>{16, 24}, {20, 12}}) {
        Tensor x = fixture::random_image(6, {2, 3, H, W});
        auto r = spectral_path(x, 8, [](const Tensor& w) { return w; });
        CHECK(r.spectrum_out.vec() == r.spectrum.vec());
        CHECK(r.output.shape() == x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(r.output[i] - x[i]) < 1e-12);
    }
}

TEST_CASE("zeroing one spectral window only touches that window") {
    const std::size_t H = 16, W = 24, w = 8;
    Tensor x = fixture::random_image(7, {1, 2, H, W});
    auto same = spectral_path(x, w, [](const Tensor& t) { return t; });
    const std::size_t target = 4;  // tile (1, 1)
    auto cut = spectral_path(x, w, [&](const Tensor& t) {
        std::vector<double> v(t.vec());
        const std::size_t per = t.numel() / t.dim(0);
        std::fill(v.begin() + static_cast<long>(target * per), v.begin() + static_cast<long>((target + 1) * per), 0.0);
        return Tensor(t.shape(), v);
    });
    Tensor diff = sub(same.output, cut.output);
    Tensor F = spectral::dct2(diff).coeffs;
    double inside = 0.0, outside = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t u = 0; u < H; ++u)
            for (std::size_t v = 0; v < W; ++v) {
                const double e = F[(c * H + u) * W + v] * F[(c * H + u) * W + v];
                ((u / w == 1 && v / w == 1) ? inside : outside) += e;
            }
    CHECK(inside > 1e-6);
    CHECK(outside / inside < 1e-10);
}

TEST_CASE("hfr forward residual identities") {
    std::mt19937_64 rng(8);
    HfrParams p = HfrParams::make(4, 2, 2, 2, 8, rng);
    Tensor img = fixture::random_image(9, {1, 3, 16, 16});
    Tensor base = fixture::random_image(10, {1, 3, 16, 16});
    Tensor feat = Tensor::randn({1, 4, 4, 4}, rng, 1.0);
    Tensor out = hfr_forward(img, feat, base, p);
    CHECK(out.shape() == img.shape());
    CHECK(out.vec() == base.vec());

    // Identity FW-KAN with a live head: base + head(x_high).
    p.head = nn::Pointwise::make(4, 3, rng);
    p.blocks.clear();
    Tensor x_high = p.embed(img) + nn::upsample_to(feat, 16, 16);
    Tensor expect = base + p.head(x_high);
    Tensor got = hfr_forward(img, feat, base, p);
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);
}

TEST_CASE("parameter count comparison") {
    for (std::size_t depth : {12u, 16u, 24u}) {
        auto c = param_count_comparison(16, depth, 8);
        CHECK(c.kan < c.mlp);
    }
    auto one = param_count_comparison(16, 1, 16);
    CHECK(one.kan - 16 * 16 == 16 * (5 + 1 + 4));
    auto g = param_count_comparison(32, 4, 8);
    CHECK(g.kan != 4 * 32 * 32);
}

}  // TEST_SUITE
