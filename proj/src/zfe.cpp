#include "err/zfe.hpp"

#include <cmath>

namespace err::zfe {

namespace {

void require_eighths(const Tensor& x, const char* what) {
    if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,H,W], got " + shape_str(x.shape()));
    if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0) {
        throw ShapeError(std::string(what) + ": extents " + std::to_string(x.dim(2)) + "x" +
                         std::to_string(x.dim(3)) + " must be multiples of 8");
    }
}

}  // namespace

Tensor aap_unit(const Tensor& x) {
    require_eighths(x, "aap_unit");
    Tensor gp = avgpool2d(x, 1, 1);
    Tensor lp = avgpool2d(x, x.dim(2) / 8, x.dim(3) / 8);
    return gp * lp + gp;
}

BbgmParams BbgmParams::make(std::size_t c, std::mt19937_64& rng) {
    return BbgmParams{nn::Pointwise::make(c, c, rng), nn::Pointwise::make(c, c, rng),
                      nn::Pointwise::make(c, 2 * c, rng), nn::Pointwise::make(2 * c, c, rng)};
}

void BbgmParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    conv_g.visit(nn::join(prefix, "conv_g"), fn);
    conv_f.visit(nn::join(prefix, "conv_f"), fn);
    conv_gw.visit(nn::join(prefix, "conv_gw"), fn);
    proj.visit(nn::join(prefix, "proj"), fn);
}

BbgmOutput bbgm_full(const Tensor& G, const Tensor& F, const BbgmParams& p) {
    if (G.shape() != F.shape()) {
        throw ShapeError("bbgm: prior " + shape_str(G.shape()) + " vs feature " + shape_str(F.shape()));
    }
    Tensor gates = gelu(p.conv_gw(p.conv_g(G) * p.conv_f(F)));
    auto halves = split(gates, 1, 2);
    const Tensor& wa = halves[0];
    Tensor fused = concat({F + wa * G, G + wa * F}, 1);
    return {p.proj(fused), halves[0], halves[1]};
}

Tensor bbgm(const Tensor& G, const Tensor& F, const BbgmParams& p) { return bbgm_full(G, F, p).out; }

Tensor channel_attention_weights(const Tensor& q, const Tensor& k, std::size_t heads) {
    const std::size_t B = q.dim(0), C = q.dim(1), N = q.dim(2) * q.dim(3);
    if (heads == 0 || C % heads != 0) {
        throw std::invalid_argument("attention: " + std::to_string(heads) + " heads do not divide " +
                                    std::to_string(C) + " channels");
    }
    const std::size_t d = C / heads;
    Tensor qh = reshape(q, {B * heads, d, N});
    Tensor kh = reshape(k, {B * heads, d, N});
    return softmax(scale(matmul(qh, transpose_last(kh)), 1.0 / std::sqrt(static_cast<double>(d))));
}

GptbParams GptbParams::make(std::size_t c, std::size_t heads, std::mt19937_64& rng) {
    if (heads == 0 || c % heads != 0) {
        throw std::invalid_argument("gptb: " + std::to_string(heads) + " heads do not divide " +
                                    std::to_string(c) + " channels");
    }
    GptbParams p;
    p.heads = heads;
    p.ln1 = nn::LayerNorm::make(c);
    p.qkv = nn::Pointwise::make(c, 3 * c, rng, false);
    p.bbgm = BbgmParams::make(c, rng);
    p.attn_out = nn::Pointwise::make(c, c, rng);
    p.ln2 = nn::LayerNorm::make(c);
    p.ffn_in = nn::Pointwise::make(c, 2 * c, rng);
    p.ffn_out = nn::Pointwise::make(2 * c, c, rng);
    return p;
}

void GptbParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    ln1.visit(nn::join(prefix, "ln1"), fn);
    qkv.visit(nn::join(prefix, "qkv"), fn);
    bbgm.visit(nn::join(prefix, "bbgm"), fn);
    attn_out.visit(nn::join(prefix, "attn_out"), fn);
    ln2.visit(nn::join(prefix, "ln2"), fn);
    ffn_in.visit(nn::join(prefix, "ffn_in"), fn);
    ffn_out.visit(nn::join(prefix, "ffn_out"), fn);
}

Tensor gptb_block(const Tensor& x, const Tensor& G, const GptbParams& p) {
    if (x.shape() != G.shape()) {
        throw ShapeError("gptb: feature " + shape_str(x.shape()) + " vs prior " + shape_str(G.shape()));
    }
    auto qkv = split(p.qkv(p.ln1(x)), 1, 3);
    Tensor q = bbgm(G, qkv[0], p.bbgm);
    Tensor k = bbgm(G, qkv[1], p.bbgm);
    Tensor v = bbgm(G, qkv[2], p.bbgm);
    const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
    Tensor attn = channel_attention_weights(q, k, p.heads);
    Tensor mixed = reshape(matmul(attn, reshape(v, {B * p.heads, C / p.heads, N})), x.shape());
    Tensor xh = p.attn_out(mixed) + x;
    return p.ffn_out(gelu(p.ffn_in(p.ln2(xh)))) + xh;
}

ZfeParams ZfeParams::make(std::size_t c, std::size_t n_blocks, std::size_t heads, std::mt19937_64& rng) {
    ZfeParams p;
    p.embed = nn::Embed::make(c, rng);
    for (std::size_t i = 0; i < n_blocks; ++i) p.blocks.push_back(GptbParams::make(c, heads, rng));
    p.head = nn::Pointwise::zeros(c, 3);
    return p;
}

void ZfeParams::visit(const std::string& prefix, const nn::Visitor& fn) {
    embed.visit(nn::join(prefix, "embed"), fn);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(nn::join(prefix, "block" + std::to_string(i)), fn);
    head.visit(nn::join(prefix, "head"), fn);
}

ZfeOutput zfe_forward(const Tensor& image, const ZfeParams& p) {
    require_eighths(image, "zfe_forward");
    const std::size_t H = image.dim(2), W = image.dim(3);
    Tensor e = p.embed(image);
    Tensor G = aap_unit(e);
    Tensor x = nn::downsample(e, 8);
    for (const auto& b : p.blocks) x = gptb_block(x, G, b);
    Tensor out = image + nn::upsample_to(p.head(x), H, W);
    return {out, x};
}

}  // namespace err::zfe
