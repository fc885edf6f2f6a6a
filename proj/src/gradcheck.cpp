#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "err/harness.hpp"
#include "err/hfr.hpp"
#include "err/lfr.hpp"
#include "err/zfe.hpp"

namespace err::harness {

double finite_difference_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                               std::size_t max_entries, std::uint64_t seed) {
    constexpr double kStep = 1e-6, kFloor = 1e-8;
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    {
        Tensor l = loss();
        backward(l);
    }
    std::mt19937_64 rng(seed);
    NoGradGuard ng;
    double worst = 0.0;
    for (auto& p : params) {
        const std::vector<double> g = p.grad();
        auto data = p.mutable_data();
        std::vector<std::size_t> probe;
        if (max_entries == 0 || max_entries >= data.size()) {
            probe.resize(data.size());
            for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = i;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
            for (std::size_t s = 0; s < max_entries; ++s) probe.push_back(pick(rng));
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i : probe) {
            const double x0 = data[i];
            const double step = kStep * std::max(1.0, std::abs(x0));
            data[i] = x0 + step;
            const double fp = loss().item();
            data[i] = x0 - step;
            const double fm = loss().item();
            data[i] = x0;
            const double num = (fp - fm) / (2.0 * step);
            diff += (g[i] - num) * (g[i] - num);
            na += g[i] * g[i];
            nn += num * num;
        }
        na = std::sqrt(na);
        nn = std::sqrt(nn);
        if (!std::isfinite(diff) || !std::isfinite(na) || !std::isfinite(nn)) return INFINITY;
        if (na < kFloor && nn < kFloor) continue;
        worst = std::max(worst, std::sqrt(diff) / std::max(na, nn));
    }
    for (auto& p : params) p.set_requires_grad(false);
    return worst;
}

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr double kCompositeTol = 1e-3;

template <class Module>
std::vector<Tensor> leaves(Module& m) {
    std::vector<Tensor> out;
    m.visit("", [&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

std::vector<Tensor> with(std::vector<Tensor> a, std::initializer_list<Tensor> b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Small random perturbation so identity-initialised pieces are not at a
// special point (exact zeros make several adjoints vanish).
template <class Module>
void jitter(Module& m, std::mt19937_64& rng, double sd) {
    std::normal_distribution<double> n(0.0, sd);
    m.visit("", [&](const std::string&, Tensor& t) {
        for (auto& v : t.mutable_data()) v += n(rng);
    });
}

}  // namespace

std::vector<GradCheck> run_gradcheck_suite(std::uint64_t seed, std::ostream* progress) {
    std::mt19937_64 rng(seed * 7919 + 1);
    std::vector<GradCheck> out;
    auto run = [&](const std::string& name, double tol, const std::function<Tensor()>& f,
                   std::vector<Tensor> params, std::size_t max_entries = 0) {
        GradCheck c{name, finite_difference_error(f, std::move(params), max_entries, seed), tol};
        if (progress) {
            *progress << (c.pass() ? "PASS " : "FAIL ") << name << " rel_err=" << c.rel_error << " tol=" << tol
                      << '\n';
        }
        out.push_back(c);
    };
    auto rnd = [&](const Shape& s, double lo = -1.0, double hi = 1.0) { return Tensor::uniform(s, rng, lo, hi); };
    auto probe = [&](const Tensor& y, const Tensor& r) { return sum(y * r); };

    // --- primitives -------------------------------------------------------
    {
        Tensor x = rnd({1, 3, 4, 4}), w = rnd({2, 3}), b = rnd({2}), r = rnd({1, 2, 4, 4});
        run("conv2d_pointwise", kPrimitiveTol, [=] { return probe(conv2d_pointwise(x, w, b), r); }, {x, w, b});
    }
    {
        Tensor x = rnd({1, 3, 5, 4}), w = rnd({3, 3, 3}), b = rnd({3}), r = rnd({1, 3, 5, 4});
        run("conv2d_depthwise", kPrimitiveTol, [=] { return probe(conv2d_depthwise(x, w, b), r); }, {x, w, b});
    }
    {
        Tensor x = rnd({2, 4, 3, 3}), g = rnd({4}), b = rnd({4}), r = rnd({2, 4, 3, 3});
        run("layernorm", kPrimitiveTol, [=] { return probe(layernorm(x, g, b), r); }, {x, g, b});
    }
    {
        Tensor x = rnd({3, 5}, -2, 2), r = rnd({3, 5});
        run("softmax", kPrimitiveTol, [=] { return probe(softmax(x), r); }, {x});
        Tensor y = rnd({3, 5}, -3, 3);
        run("gelu", kPrimitiveTol, [=] { return probe(gelu(y), r); }, {y});
    }
    {
        Tensor a = rnd({2, 3, 4}), b = rnd({2, 4, 5}), r = rnd({2, 3, 5});
        run("matmul", kPrimitiveTol, [=] { return probe(matmul(a, b), r); }, {a, b});
    }
    {
        Tensor x = rnd({1, 2, 8, 8}), r1 = rnd({1, 2, 2, 2}), r2 = rnd({1, 2, 12, 12});
        run("avgpool2d", kPrimitiveTol, [=] { return probe(avgpool2d(x, 2, 2), r1); }, {x});
        run("bilinear_resize", kPrimitiveTol, [=] { return probe(bilinear_resize(x, 12, 12), r2); }, {x});
    }
    {
        Tensor x = rnd({1, 2, 6, 8}), r = rnd({1, 2, 6, 8});
        run("dct2", kPrimitiveTol, [=] { return probe(spectral::dct2(x).coeffs, r); }, {x});
        run("idct2", kPrimitiveTol, [=] { return probe(spectral::idct2({x}), r); }, {x});
    }
    {
        Tensor x = rnd({1, 4, 3, 3}, -2, 2), r = rnd({1, 2, 3, 3});
        run("simple_gate", kPrimitiveTol, [=] { return probe(lfr::simple_gate(x), r); }, {x});
    }
    {
        Tensor x = rnd({2, 4, 3, 3}, -2, 2), a = rnd({2, 6}, -0.5, 0.5), b = rnd({2, 4}, -0.5, 0.5);
        Tensor r = rnd({2, 4, 3, 3});
        run("rational_act", kPrimitiveTol, [=] { return probe(hfr::rational_act(x, a, b), r); }, {x, a, b});
    }
    {
        Tensor o = rnd({1, 3, 12, 12}, 0, 1), g = rnd({1, 3, 12, 12}, 0, 1);
        run("l1_loss", kPrimitiveTol, [=] { return losses::l1_loss(o, g); }, {o});
        run("ssim_loss", kPrimitiveTol, [=] { return losses::ssim_loss(o, g); }, {o});
        run("zero_freq_loss", kPrimitiveTol, [=] { return losses::zero_freq_loss(o, g); }, {o});
        run("low_freq_loss", kPrimitiveTol, [=] { return losses::low_freq_loss(o, g, 4); }, {o});
        run("high_freq_loss", kPrimitiveTol, [=] { return losses::high_freq_loss(o, g, 4); }, {o});
    }

    // --- composite blocks -------------------------------------------------
    {
        zfe::BbgmParams p = zfe::BbgmParams::make(4, rng);
        jitter(p, rng, 0.05);
        Tensor G = rnd({1, 4, 4, 4}), F = rnd({1, 4, 4, 4}), r = rnd({1, 4, 4, 4});
        run("bbgm", kCompositeTol, [=] { return probe(zfe::bbgm(G, F, p), r); }, with(leaves(p), {G, F}));
    }
    {
        zfe::GptbParams p = zfe::GptbParams::make(4, 2, rng);
        jitter(p, rng, 0.05);
        Tensor x = rnd({1, 4, 8, 8}), G = rnd({1, 4, 8, 8}), r = rnd({1, 4, 8, 8});
        run("gptb_block", kCompositeTol, [=] { return probe(zfe::gptb_block(x, G, p), r); }, with(leaves(p), {x, G}));
    }
    {
        lfr::ScanParams p = lfr::ScanParams::make(3, 2, rng);
        jitter(p, rng, 0.05);
        Tensor u = rnd({6, 3}), r = rnd({6, 3});
        run("selective_scan_fwd", kCompositeTol,
            [=] { return probe(lfr::selective_scan_1d(u, p, lfr::Direction::Forward), r); }, with(leaves(p), {u}));
        run("selective_scan_bwd", kCompositeTol,
            [=] { return probe(lfr::selective_scan_1d(u, p, lfr::Direction::Backward), r); }, with(leaves(p), {u}));
    }
    {
        lfr::VssmParams p = lfr::VssmParams::make(4, 2, rng);
        jitter(p, rng, 0.05);
        Tensor x = rnd({1, 4, 4, 4}), r = rnd({1, 4, 4, 4});
        run("vssm", kCompositeTol, [=] { return probe(lfr::vssm(x, p), r); }, with(leaves(p), {x}));
    }
    {
        lfr::RssbParams p = lfr::RssbParams::make(4, 2, rng);
        jitter(p, rng, 0.05);
        Tensor x = rnd({1, 4, 8, 8}), r = rnd({1, 4, 8, 8});
        run("rssb", kCompositeTol, [=] { return probe(lfr::rssb(x, p), r); }, with(leaves(p), {x}));
    }
    {
        hfr::GrKanLayer p = hfr::GrKanLayer::make(4, 2, rng);
        Tensor x = rnd({10, 4}, -2, 2), r = rnd({10, 4});
        run("gr_kan_layer", kCompositeTol, [=] { return probe(hfr::gr_kan_layer(x, p), r); }, with(leaves(p), {x}));
    }
    {
        std::vector<hfr::GrKanLayer> layers{hfr::GrKanLayer::make(4, 2, rng), hfr::GrKanLayer::make(4, 2, rng)};
        Tensor x = rnd({1, 4, 6, 6}), r = rnd({1, 4, 6, 6});
        std::vector<Tensor> params{x};
        for (auto& l : layers) {
            auto lv = leaves(l);
            params.insert(params.end(), lv.begin(), lv.end());
        }
        run("fw_kan_path", kCompositeTol,
            [=] { return probe(hfr::spectral_path(x, 4, [&](const Tensor& w) { return hfr::fw_kan(w, layers); }).output, r); },
            params);
    }

    // --- stages and the tiny end-to-end model ------------------------------
    ErrConfig tiny;
    tiny.channels = 4;
    tiny.blocks_zfe = tiny.blocks_lfr = tiny.blocks_hfr = 1;
    tiny.heads = 2;
    tiny.d_state = 2;
    tiny.kan_layers = 1;
    tiny.kan_groups = 2;
    tiny.k = 4;
    tiny.patch = 32;
    tiny.seed = seed;
    ErrModel model = ErrModel::init(tiny);
    for (nn::Pointwise* h : {&model.zfe.head, &model.lfr.head, &model.hfr.head}) {
        *h = nn::Pointwise::make(h->weight.dim(1), 3, rng);
        for (auto& v : h->weight.mutable_data()) v *= 0.3;
    }
    Tensor img = rnd({1, 3, 32, 32}, 0, 1), gt = rnd({1, 3, 32, 32}, 0, 1), r3 = rnd({1, 3, 32, 32});
    {
        ErrModel& m = model;
        run("zfe_forward", kCompositeTol, [=, &m] { return probe(zfe::zfe_forward(img, m.zfe).image, r3); },
            leaves(m.zfe));
        Tensor feat = rnd({1, 4, 4, 4}), base = rnd({1, 3, 32, 32}, 0, 1);
        run("lfr_forward", kCompositeTol, [=, &m] { return probe(lfr::lfr_forward(img, feat, base, m.lfr).image, r3); },
            with(leaves(m.lfr), {feat}));
        Tensor feat2 = rnd({1, 4, 8, 8});
        run("hfr_forward", kCompositeTol, [=, &m] { return probe(hfr::hfr_forward(img, feat2, base, m.hfr), r3); },
            with(leaves(m.hfr), {feat2}));
        std::vector<Tensor> all;
        m.visit([&](const std::string&, Tensor& t) { all.push_back(t); });
        run("end_to_end_tiny", kCompositeTol, [=, &m] { return err_loss(img, gt, m).total; }, all);
    }
    return out;
}

}  // namespace err::harness
