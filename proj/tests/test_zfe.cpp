#include <doctest.h>

#include "err/zfe.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace err;
using namespace err::zfe;

namespace {

void zero_out(nn::Pointwise& p) {
    for (auto& v : p.weight.mutable_data()) v = 0.0;
    if (p.bias.defined())
        for (auto& v : p.bias.mutable_data()) v = 0.0;
}

void randomize(nn::Pointwise& p, unsigned seed) {
    std::mt19937_64 rng(seed);
    p = nn::Pointwise::make(p.weight.dim(1), p.weight.dim(0), rng);
    std::normal_distribution<double> N(0.0, 0.1);
    for (auto& v : p.bias.mutable_data()) v = N(rng);
}

}  // namespace

TEST_SUITE("zfe") {

TEST_CASE("aap prior of constants and zeros") {
    // Dyadic constant: every pooled sum is exact, so the identity is bit-exact.
    const double c = 0.375;
    Tensor x(Shape{2, 3, 16, 24}, c);
    Tensor G = aap_unit(x);
    CHECK(G.shape() == Shape{2, 3, 2, 3});
    for (double v : G.vec()) CHECK(v == c * c + c);
    for (double v : aap_unit(Tensor(Shape{1, 1, 16, 16}, 0.37)).vec()) CHECK(std::abs(v - (0.37 * 0.37 + 0.37)) < 1e-14);
    for (double v : aap_unit(Tensor(Shape{1, 2, 8, 8}, 0.0)).vec()) CHECK(v == 0.0);
    CHECK_THROWS_AS(aap_unit(Tensor(Shape{1, 1, 12, 16})), ShapeError);
}

TEST_CASE("aap prior on a constructed input matches hand pooling") {
    // 16x16 single channel, 2x2 grid of 8x8 cells with distinct values inside each cell.
    std::vector<double> v(256);
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) v[i * 16 + j] = 0.01 * static_cast<double>((i * 7 + j * 3) % 11) + 0.1 * static_cast<double>(i / 8 + 2 * (j / 8));
    Tensor x(Shape{1, 1, 16, 16}, v);
    double g = 0.0;
    for (double t : v) g += t;
    g /= 256.0;
    Tensor G = aap_unit(x);
    for (std::size_t ci = 0; ci < 2; ++ci)
        for (std::size_t cj = 0; cj < 2; ++cj) {
            double m = 0.0;
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) m += v[(ci * 8 + i) * 16 + cj * 8 + j];
            m /= 64.0;
            CHECK(G[ci * 2 + cj] == doctest::Approx(m * g + g).epsilon(1e-14));
        }
}

TEST_CASE("bbgm with a zero prior reduces to projecting [F, 0]") {
    std::mt19937_64 rng(1);
    BbgmParams p = BbgmParams::make(4, rng);
    Tensor F = fixture::random_image(2, {2, 4, 3, 5});
    Tensor G(F.shape(), 0.0);
    auto r = bbgm_full(G, F, p);
    for (double v : r.w_a.vec()) CHECK(v == 0.0);
    Tensor expect = conv2d_pointwise(concat({F, Tensor(F.shape(), 0.0)}, 1), p.proj.weight, p.proj.bias);
    CHECK(r.out.shape() == F.shape());
    CHECK(r.out.vec() == expect.vec());
    CHECK_THROWS_AS(bbgm(G, Tensor(Shape{2, 4, 3, 4}), p), ShapeError);
}

TEST_CASE("bbgm gradient") {
    std::mt19937_64 rng(3);
    BbgmParams p = BbgmParams::make(3, rng);
    randomize(p.conv_gw, 11);
    Tensor G = fixture::random_image(4, {1, 3, 4, 4});
    Tensor F = fixture::random_image(5, {1, 3, 4, 4});
    Tensor R = oracle::probe_weights(F.shape());
    std::vector<Tensor> params{G, F};
    p.visit("", [&](const std::string&, Tensor& t) { params.push_back(t); });
    CHECK(oracle::check_gradients([&] { return oracle::weighted_sum(bbgm(G, F, p), R); }, params) < 1e-4);
}

TEST_CASE("attention rows are normalised") {
    Tensor q = fixture::random_image(6, {2, 8, 4, 4});
    Tensor k = fixture::random_image(7, {2, 8, 4, 4});
    Tensor A = channel_attention_weights(scale(q, 5.0), k, 2);
    CHECK(A.shape() == Shape{4, 4, 4});
    for (std::size_t r = 0; r < 16; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += A[r * 4 + c];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(channel_attention_weights(q, k, 3), std::invalid_argument);
}

TEST_CASE("gptb residual identity and shape") {
    std::mt19937_64 rng(8);
    GptbParams p = GptbParams::make(8, 2, rng);
    Tensor x = fixture::random_image(9, {2, 8, 4, 4});
    Tensor G = aap_unit(fixture::random_image(10, {2, 8, 32, 32}));
    Tensor y = gptb_block(x, G, p);
    CHECK(y.shape() == x.shape());
    CHECK(y.vec() != x.vec());
    zero_out(p.attn_out);
    zero_out(p.ffn_out);
    CHECK(gptb_block(x, G, p).vec() == x.vec());
    CHECK_THROWS_AS(GptbParams::make(8, 3, rng), std::invalid_argument);
}

TEST_CASE("gptb gradient at C=4 over 8x8 tokens") {
    std::mt19937_64 rng(12);
    GptbParams p = GptbParams::make(4, 2, rng);
    randomize(p.bbgm.conv_gw, 13);
    Tensor x = fixture::random_image(14, {1, 4, 8, 8});
    Tensor G = fixture::random_image(15, {1, 4, 8, 8});
    Tensor R = oracle::probe_weights(x.shape());
    std::vector<Tensor> params{x, G};
    p.visit("", [&](const std::string&, Tensor& t) { params.push_back(t); });
    CHECK(oracle::check_gradients([&] { return oracle::weighted_sum(gptb_block(x, G, p), R); }, params) < 1e-3);
}

TEST_CASE("zfe forward starts at the identity") {
    std::mt19937_64 rng(16);
    ZfeParams p = ZfeParams::make(8, 2, 2, rng);
    Tensor img = fixture::random_image(17, {2, 3, 32, 16});
    ZfeOutput o = zfe_forward(img, p);
    CHECK(o.image.shape() == img.shape());
    CHECK(o.image.vec() == img.vec());
    CHECK(o.feature.shape() == Shape{2, 8, 4, 2});
    CHECK_THROWS_AS(zfe_forward(fixture::random_image(1, {1, 3, 20, 16}), p), ShapeError);

    randomize(p.head, 18);
    CHECK(zfe_forward(img, p).image.vec() != img.vec());
}

}  // TEST_SUITE
