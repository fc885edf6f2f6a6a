#pragma once

#include <array>
#include <vector>

#include "err/nn.hpp"

// Stage 2: residue state-space blocks at 1/4 resolution.
namespace err::lfr {

/// gelu(F1) * F2 over the two channel halves.
Tensor simple_gate(const Tensor& x);

/// Fused selective-scan recurrence with its own adjoint.
///   u, delta: [Bt, L, E]   bmat, cmat: [Bt, L, N]   a: [E, N] (negative)   d: [E]
///   h_t = exp(delta_t a) h_{t-1} + delta_t b_t u_t,  y_t = c_t . h_t + d u_t
Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bmat,
                           const Tensor& cmat, const Tensor& d);

struct ScanParams {
    Tensor dt_weight;  // [E, E]
    Tensor dt_bias;    // [E]
    Tensor b_proj;     // [N, E]
    Tensor c_proj;     // [N, E]
    Tensor a_log;      // [E, N], A = -exp(a_log)
    Tensor d;          // [E]

    static ScanParams make(std::size_t width, std::size_t d_state, std::mt19937_64& rng);
    std::size_t d_state() const { return a_log.dim(1); }
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

enum class Direction { Forward, Backward };

/// Single sequence scan: u is [L, E] (or [Bt, L, E]).
Tensor selective_scan_1d(const Tensor& u, const ScanParams& p, Direction dir = Direction::Forward);

/// Largest |h| reached over a forward scan; used for stability checks.
double scan_state_peak(const Tensor& u, const ScanParams& p);

struct VssmParams {
    nn::Pointwise in_proj;   // C -> 2E, no bias
    nn::Depthwise conv;      // E
    std::array<ScanParams, 4> scans;  // row fwd, row bwd, col fwd, col bwd
    nn::LayerNorm out_norm;  // E
    nn::Pointwise out_proj;  // E -> C, no bias

    static VssmParams make(std::size_t channels, std::size_t d_state, std::mt19937_64& rng, std::size_t expand = 2);
    /// Parameters for the transposed image: row and column scans trade places.
    VssmParams transposed() const;
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

Tensor vssm(const Tensor& x, const VssmParams& p);

struct RssbParams {
    nn::LayerNorm ln1;
    VssmParams vssm;
    Tensor s;        // [1, C, 1, 1]
    nn::LayerNorm ln2;
    nn::Pointwise pc_in;   // C -> 2C
    nn::Depthwise dc;      // 2C
    nn::Pointwise pc_out;  // C -> C, identity at init
    Tensor s2;       // [1, C, 1, 1]

    static RssbParams make(std::size_t channels, std::size_t d_state, std::mt19937_64& rng);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

Tensor rssb(const Tensor& x, const RssbParams& p);

struct LfrParams {
    nn::Embed embed;
    std::vector<RssbParams> blocks;
    nn::Pointwise head;  // zero-initialised

    static LfrParams make(std::size_t channels, std::size_t n_blocks, std::size_t d_state, std::mt19937_64& rng);
    void visit(const std::string& prefix, const nn::Visitor& fn);
};

struct LfrOutput {
    Tensor image;    // O_s2
    Tensor feature;  // [B, C, H/4, W/4]
};

/// `feat_s1` may be undefined (no feature residual); `base` is the image the
/// stage output is added to (O_s1, or the raw input).
LfrOutput lfr_forward(const Tensor& image, const Tensor& feat_s1, const Tensor& base, const LfrParams& p);

}  // namespace err::lfr
