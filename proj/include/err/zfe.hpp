#pragma once

#include <utility>
#include <vector>

#include "err/nn.hpp"

// Stage 1: global prior plus gated transformer blocks at 1/8 resolution.
namespace err::zfe {

/// G = gp * lp + gp with gp the (1,1) pool and lp the (H/8, W/8) pool.
Tensor aap_unit(const Tensor& x);

struct BbgmParams {
    nn::Pointwise conv_g;   // C -> C on the prior
    nn::Pointwise conv_f;   // C -> C on the feature
    nn::Pointwise conv_gw;  // C -> 2C, split into W_a, W_b
    nn::Pointwise proj;     // 2C -> C after the concat

    static BbgmParams make(std::size_t channels, std::mt19937_64& rng);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

struct BbgmOutput {
    Tensor out;
    Tensor w_a;
    Tensor w_b;  // computed, unused downstream
};

BbgmOutput bbgm_full(const Tensor& G, const Tensor& F, const BbgmParams& p);
Tensor bbgm(const Tensor& G, const Tensor& F, const BbgmParams& p);

/// softmax(q k^T / sqrt(d)) per head over channel rows; [B*heads, d, d].
Tensor channel_attention_weights(const Tensor& q, const Tensor& k, std::size_t heads);

struct GptbParams {
    std::size_t heads = 1;
    nn::LayerNorm ln1;
    nn::Pointwise qkv;  // C -> 3C, no bias
    BbgmParams bbgm;    // shared by Q, K and V
    nn::Pointwise attn_out;
    nn::LayerNorm ln2;
    nn::Pointwise ffn_in;   // C -> 2C
    nn::Pointwise ffn_out;  // 2C -> C

    static GptbParams make(std::size_t channels, std::size_t heads, std::mt19937_64& rng);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

Tensor gptb_block(const Tensor& x_low, const Tensor& G, const GptbParams& p);

struct ZfeParams {
    nn::Embed embed;
    std::vector<GptbParams> blocks;
    nn::Pointwise head;  // C -> 3, zero-initialised

    static ZfeParams make(std::size_t channels, std::size_t n_blocks, std::size_t heads, std::mt19937_64& rng);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

struct ZfeOutput {
    Tensor image;    // O_s1
    Tensor feature;  // [B, C, H/8, W/8] before the head
};

ZfeOutput zfe_forward(const Tensor& image, const ZfeParams& p);

}  // namespace err::zfe
