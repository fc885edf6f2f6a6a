#include "err/lfr.hpp"

#include <algorithm>
#include <cmath>

namespace err::lfr {

namespace {

Tensor linear_last(const Tensor& x2d, const Tensor& w) { return matmul(x2d, transpose_last(w)); }

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

void check_scan_shapes(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bmat,
                       const Tensor& cmat, const Tensor& d) {
    if (u.rank() != 3) throw ShapeError("selective_scan: u must be [Bt, L, E], got " + shape_str(u.shape()));
    const std::size_t Bt = u.dim(0), L = u.dim(1), E = u.dim(2);
    if (a.rank() != 2 || a.dim(0) != E) throw ShapeError("selective_scan: A must be [E, N], got " + shape_str(a.shape()));
    const std::size_t N = a.dim(1);
    if (delta.shape() != u.shape()) throw ShapeError("selective_scan: delta " + shape_str(delta.shape()));
    if (bmat.shape() != Shape{Bt, L, N} || cmat.shape() != Shape{Bt, L, N}) {
        throw ShapeError("selective_scan: B/C must be [Bt, L, N], got " + shape_str(bmat.shape()) + ", " +
                         shape_str(cmat.shape()));
    }
    if (d.shape() != Shape{E}) throw ShapeError("selective_scan: D must be [E], got " + shape_str(d.shape()));
}

// Runs the recurrence, storing every state. Returns y.
std::vector<double> run_scan(const std::vector<double>& u, const std::vector<double>& delta,
                             const std::vector<double>& a, const std::vector<double>& bm,
                             const std::vector<double>& cm, const std::vector<double>& d, std::size_t Bt,
                             std::size_t L, std::size_t E, std::size_t N, std::vector<double>& states) {
    std::vector<double> y(Bt * L * E);
    states.assign(Bt * L * E * N, 0.0);
    for (std::size_t b = 0; b < Bt; ++b)
        for (std::size_t t = 0; t < L; ++t) {
            const std::size_t row = b * L + t;
            for (std::size_t e = 0; e < E; ++e) {
                const double dl = delta[row * E + e], uu = u[row * E + e];
                const double* hp = t > 0 ? &states[((row - 1) * E + e) * N] : nullptr;
                double* h = &states[(row * E + e) * N];
                double acc = 0.0;
                for (std::size_t n = 0; n < N; ++n) {
                    const double decay = std::exp(dl * a[e * N + n]);
                    h[n] = (hp ? decay * hp[n] : 0.0) + dl * bm[row * N + n] * uu;
                    acc += cm[row * N + n] * h[n];
                }
                y[row * E + e] = acc + d[e] * uu;
            }
        }
    return y;
}

}  // namespace

Tensor simple_gate(const Tensor& x) {
    if (x.rank() < 2 || x.dim(1) % 2 != 0) {
        throw ShapeError("simple_gate: channel count must be even, got " + shape_str(x.shape()));
    }
    auto halves = split(x, 1, 2);
    return gelu(halves[0]) * halves[1];
}

Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bmat,
                           const Tensor& cmat, const Tensor& d) {
    check_scan_shapes(u, delta, a, bmat, cmat, d);
    const std::size_t Bt = u.dim(0), L = u.dim(1), E = u.dim(2), N = a.dim(1);
    auto states = std::make_shared<std::vector<double>>();
    std::vector<double> y = run_scan(u.vec(), delta.vec(), a.vec(), bmat.vec(), cmat.vec(), d.vec(), Bt, L, E, N, *states);

    return make_result(u.shape(), std::move(y), {u, delta, a, bmat, cmat, d},
                       [=](const detail::Node& o) {
        const auto& uv = u.vec();
        const auto& dv = delta.vec();
        const auto& av = a.vec();
        const auto& bv = bmat.vec();
        const auto& cv = cmat.vec();
        const auto& Dv = d.vec();
        const auto& hs = *states;
        std::vector<double> gu(uv.size(), 0.0), gdelta(dv.size(), 0.0), ga(av.size(), 0.0);
        std::vector<double> gb(bv.size(), 0.0), gc(cv.size(), 0.0), gd(Dv.size(), 0.0);
        std::vector<double> carry(N);
        for (std::size_t b = 0; b < Bt; ++b)
            for (std::size_t e = 0; e < E; ++e) {
                std::fill(carry.begin(), carry.end(), 0.0);
                for (std::size_t t = L; t-- > 0;) {
                    const std::size_t row = b * L + t, idx = row * E + e;
                    const double gy = o.grad[idx], dl = dv[idx], uu = uv[idx];
                    gd[e] += gy * uu;
                    gu[idx] += gy * Dv[e];
                    const double* h = &hs[idx * N];
                    const double* hp = t > 0 ? &hs[((row - 1) * E + e) * N] : nullptr;
                    for (std::size_t n = 0; n < N; ++n) {
                        const double an = av[e * N + n];
                        const double bn = bv[row * N + n];
                        gc[row * N + n] += gy * h[n];
                        const double g = carry[n] + gy * cv[row * N + n];  // dL/dh_t
                        const double decay = std::exp(dl * an);
                        const double g_decay = hp ? g * hp[n] : 0.0;
                        gdelta[idx] += g_decay * decay * an + g * bn * uu;
                        ga[e * N + n] += g_decay * decay * dl;
                        gb[row * N + n] += g * dl * uu;
                        gu[idx] += g * dl * bn;
                        carry[n] = g * decay;
                    }
                }
            }
        accumulate_grad(u, gu);
        accumulate_grad(delta, gdelta);
        accumulate_grad(a, ga);
        accumulate_grad(bmat, gb);
        accumulate_grad(cmat, gc);
        accumulate_grad(d, gd);
    });
}

ScanParams ScanParams::make(std::size_t E, std::size_t N, std::mt19937_64& rng) {
    ScanParams p;
    const double sd = 1.0 / std::sqrt(static_cast<double>(E));
    p.dt_weight = nn::normal({E, E}, sd, rng);
    std::vector<double> bias(E);
    std::uniform_real_distribution<double> U(std::log(1e-3), std::log(1e-1));
    for (auto& b : bias) b = inverse_softplus(std::exp(U(rng)));
    p.dt_bias = Tensor(Shape{E}, std::move(bias), true);
    p.b_proj = nn::normal({N, E}, sd, rng);
    p.c_proj = nn::normal({N, E}, sd, rng);
    std::vector<double> alog(E * N);
    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t n = 0; n < N; ++n) alog[e * N + n] = std::log(static_cast<double>(n + 1));
    p.a_log = Tensor(Shape{E, N}, std::move(alog), true);
    p.d = nn::filled({E}, 1.0);
    return p;
}

void ScanParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    fn(nn::join(prefix, "dt_weight"), dt_weight);
    fn(nn::join(prefix, "dt_bias"), dt_bias);
    fn(nn::join(prefix, "b_proj"), b_proj);
    fn(nn::join(prefix, "c_proj"), c_proj);
    fn(nn::join(prefix, "a_log"), a_log);
    fn(nn::join(prefix, "d"), d);
}

namespace {

// u: [Bt, L, E] in scan order.
Tensor scan_sequence(const Tensor& u, const ScanParams& p) {
    const std::size_t Bt = u.dim(0), L = u.dim(1), E = u.dim(2), N = p.d_state();
    Tensor u2 = reshape(u, {Bt * L, E});
    Tensor delta = reshape(softplus(linear_last(u2, p.dt_weight) + p.dt_bias), {Bt, L, E});
    Tensor bm = reshape(linear_last(u2, p.b_proj), {Bt, L, N});
    Tensor cm = reshape(linear_last(u2, p.c_proj), {Bt, L, N});
    return selective_scan_core(u, delta, neg(exp(p.a_log)), bm, cm, p.d);
}

Tensor reverse_time(const Tensor& u) {
    const std::size_t Bt = u.dim(0), L = u.dim(1), E = u.dim(2);
    std::vector<std::size_t> index(u.numel());
    for (std::size_t b = 0; b < Bt; ++b)
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t e = 0; e < E; ++e) index[(b * L + t) * E + e] = (b * L + (L - 1 - t)) * E + e;
    return gather(u, std::move(index), u.shape());
}

}  // namespace

Tensor selective_scan_1d(const Tensor& u, const ScanParams& p, Direction dir) {
    if (u.rank() == 2) return reshape(selective_scan_1d(reshape(u, {1, u.dim(0), u.dim(1)}), p, dir), u.shape());
    if (u.rank() != 3 || u.dim(1) == 0) throw ShapeError("selective_scan_1d: expected [L, E] with L >= 1");
    if (dir == Direction::Forward) return scan_sequence(u, p);
    return reverse_time(scan_sequence(reverse_time(u), p));
}

double scan_state_peak(const Tensor& u, const ScanParams& p) {
    NoGradGuard ng;
    Tensor seq = u.rank() == 2 ? reshape(u, {1, u.dim(0), u.dim(1)}) : u;
    const std::size_t Bt = seq.dim(0), L = seq.dim(1), E = seq.dim(2), N = p.d_state();
    Tensor u2 = reshape(seq, {Bt * L, E});
    Tensor delta = softplus(linear_last(u2, p.dt_weight) + p.dt_bias);
    Tensor bm = linear_last(u2, p.b_proj);
    Tensor cm = linear_last(u2, p.c_proj);
    Tensor a = neg(exp(p.a_log));
    std::vector<double> states;
    run_scan(seq.vec(), delta.vec(), a.vec(), bm.vec(), cm.vec(), p.d.vec(), Bt, L, E, N, states);
    double peak = 0.0;
    for (double h : states) peak = std::max(peak, std::abs(h));
    return peak;
}

// ---------------------------------------------------------------------------

VssmParams VssmParams::make(std::size_t c, std::size_t d_state, std::mt19937_64& rng, std::size_t expand) {
    const std::size_t E = expand * c;
    VssmParams p;
    p.in_proj = nn::Pointwise::make(c, 2 * E, rng, false);
    p.conv = nn::Depthwise::make(E, rng);
    for (auto& s : p.scans) s = ScanParams::make(E, d_state, rng);
    p.out_norm = nn::LayerNorm::make(E);
    p.out_proj = nn::Pointwise::make(E, c, rng, false);
    return p;
}

VssmParams VssmParams::transposed() const {
    VssmParams t = *this;
    t.scans = {scans[2], scans[3], scans[0], scans[1]};
    const std::size_t C = conv.weight.dim(0);
    std::vector<std::size_t> index(conv.weight.numel());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) index[(c * 3 + i) * 3 + j] = (c * 3 + j) * 3 + i;
    t.conv.weight = gather(conv.weight, std::move(index), conv.weight.shape());
    return t;
}

void VssmParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    in_proj.visit(nn::join(prefix, "in_proj"), fn);
    conv.visit(nn::join(prefix, "conv"), fn);
    static const char* names[4] = {"scan_row_fwd", "scan_row_bwd", "scan_col_fwd", "scan_col_bwd"};
    for (std::size_t i = 0; i < 4; ++i) scans[i].visit(nn::join(prefix, names[i]), fn);
    out_norm.visit(nn::join(prefix, "out_norm"), fn);
    out_proj.visit(nn::join(prefix, "out_proj"), fn);
}

namespace {

// Pixel visited at step t of direction `dir` (0 row fwd, 1 row bwd, 2 col fwd, 3 col bwd).
std::size_t pixel_at(std::size_t dir, std::size_t t, std::size_t H, std::size_t W) {
    const std::size_t L = H * W;
    if (dir == 1 || dir == 3) t = L - 1 - t;
    if (dir < 2) return t;
    return (t % H) * W + t / H;
}

}  // namespace

Tensor vssm(const Tensor& x, const VssmParams& p) {
    if (x.rank() != 4) throw ShapeError("vssm: expected [B,C,H,W], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3), L = H * W;
    auto xz = split(p.in_proj(x), 1, 2);
    Tensor xs = silu(p.conv(xz[0]));
    const std::size_t E = xs.dim(1);
    Tensor acc;
    for (std::size_t dir = 0; dir < 4; ++dir) {
        std::vector<std::size_t> to_seq(B * L * E), to_img(B * E * L);
        for (std::size_t t = 0; t < L; ++t) {
            const std::size_t pix = pixel_at(dir, t, H, W);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t e = 0; e < E; ++e) {
                    to_seq[(b * L + t) * E + e] = (b * E + e) * L + pix;
                    to_img[(b * E + e) * L + pix] = (b * L + t) * E + e;
                }
        }
        Tensor seq = gather(xs, std::move(to_seq), {B, L, E});
        Tensor y = gather(scan_sequence(seq, p.scans[dir]), std::move(to_img), xs.shape());
        acc = acc.defined() ? acc + y : y;
    }
    return p.out_proj(p.out_norm(acc) * silu(xz[1]));
}

// ---------------------------------------------------------------------------

RssbParams RssbParams::make(std::size_t c, std::size_t d_state, std::mt19937_64& rng) {
    RssbParams p;
    p.ln1 = nn::LayerNorm::make(c);
    p.vssm = VssmParams::make(c, d_state, rng);
    p.s = nn::filled({1, c, 1, 1}, 1.0);
    p.ln2 = nn::LayerNorm::make(c);
    p.pc_in = nn::Pointwise::make(c, 2 * c, rng);
    p.dc = nn::Depthwise::make(2 * c, rng);
    p.pc_out = nn::Pointwise{nn::eye(c), nn::filled({c}, 0.0)};
    p.s2 = nn::filled({1, c, 1, 1}, 1.0);
    return p;
}

void RssbParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    ln1.visit(nn::join(prefix, "ln1"), fn);
    vssm.visit(nn::join(prefix, "vssm"), fn);
    fn(nn::join(prefix, "s"), s);
    ln2.visit(nn::join(prefix, "ln2"), fn);
    pc_in.visit(nn::join(prefix, "pc_in"), fn);
    dc.visit(nn::join(prefix, "dc"), fn);
    pc_out.visit(nn::join(prefix, "pc_out"), fn);
    fn(nn::join(prefix, "s2"), s2);
}

Tensor rssb(const Tensor& x, const RssbParams& p) {
    Tensor x1 = vssm(p.ln1(x), p.vssm) + p.s * x;
    Tensor inner = simple_gate(p.dc(p.pc_in(p.ln2(x1))));
    return p.pc_out(inner + p.s2 * x1);
}

LfrParams LfrParams::make(std::size_t c, std::size_t n_blocks, std::size_t d_state, std::mt19937_64& rng) {
    LfrParams p;
    p.embed = nn::Embed::make(c, rng);
    for (std::size_t i = 0; i < n_blocks; ++i) p.blocks.push_back(RssbParams::make(c, d_state, rng));
    p.head = nn::Pointwise::zeros(c, 3);
    return p;
}

void LfrParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    embed.visit(nn::join(prefix, "embed"), fn);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(nn::join(prefix, "block" + std::to_string(i)), fn);
    head.visit(nn::join(prefix, "head"), fn);
}

LfrOutput lfr_forward(const Tensor& image, const Tensor& feat_s1, const Tensor& base, const LfrParams& p) {
    if (image.rank() != 4 || image.dim(2) % 4 != 0 || image.dim(3) % 4 != 0) {
        throw ShapeError("lfr_forward: extents of " + shape_str(image.shape()) + " must be multiples of 4");
    }
    const std::size_t H = image.dim(2), W = image.dim(3);
    Tensor x = nn::downsample(p.embed(image), 4);
    if (feat_s1.defined()) x = x + nn::upsample_to(feat_s1, H / 4, W / 4);
    for (const auto& b : p.blocks) x = rssb(x, b);
    return {base + nn::upsample_to(p.head(x), H, W), x};
}

}  // namespace err::lfr
