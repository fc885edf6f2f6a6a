#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "err/image.hpp"
#include "err/ops.hpp"
#include "err/tensor.hpp"

namespace err::spectral {

/// Orthonormal DCT-II basis, rows indexed by frequency: D(u, n) = a(u) cos((2n+1) u pi / 2N).
Matrix dct_matrix(std::size_t n);

enum class Norm { Orthonormal };

/// DCT coefficients of an image batch, [B, C, H, W] with (u, v) on the last two axes.
struct Spectrum {
    Tensor coeffs;
    Norm norm = Norm::Orthonormal;

    std::size_t height() const { return coeffs.dim(2); }
    std::size_t width() const { return coeffs.dim(3); }
};

/// Separable per-channel DCT along H then W. Differentiable.
Spectrum dct2(const Tensor& x);
Tensor idct2(const Spectrum& s);

enum class Band {
    Zero,  // (0,0)
    Low,   // u<k and v<k, minus (0,0)
    High,  // u>=k or v>=k
    All,
};

/// Frequency cutoff with the spectrum extents it applies to.
struct BandSpec {
    std::size_t k;
    std::size_t height;
    std::size_t width;

    /// Throws unless 1 <= k <= min(height, width).
    void validate() const;
    bool contains(Band band, std::size_t u, std::size_t v) const;
    std::size_t count(Band band) const;
};

/// 0/1 mask of shape [1, 1, H, W] selecting the band's indices.
Tensor band_mask(const BandSpec& spec, Band band);
Tensor band_mask(std::size_t height, std::size_t width, Band band, std::size_t k);
/// Mask of {u < k and v < k}; any k >= 0 (k = 0 selects nothing).
Tensor corner_mask(std::size_t height, std::size_t width, std::size_t k);

/// Swaps the masked DCT coefficients of a and b, returning both images.
std::pair<Tensor, Tensor> exchange(const Tensor& a, const Tensor& b, const Tensor& mask);
std::pair<Tensor, Tensor> exchange_band(const Tensor& a, const Tensor& b, Band band, std::size_t k);

struct CurvePoint {
    std::size_t k;
    double psnr;
};

/// For each k, copies GT's {u<k, v<k} coefficients into the input and reports
/// PSNR against GT. The residual energy is measured in the spectrum, so the
/// curve is exactly non-decreasing.
std::vector<CurvePoint> progressive_fill_curve(const Tensor& input, const Tensor& gt,
                                               const std::vector<std::size_t>& ks);
/// The filled image for a single k.
Tensor fill_low_frequencies(const Tensor& input, const Tensor& gt, std::size_t k);
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

/// Non-overlapping w x w tiles of [B, C, H, W] -> [B * nH * nW, C, w, w],
/// tiles ordered by (batch, tile row, tile column).
Tensor window_partition(const Tensor& s, std::size_t w);
Tensor window_reverse(const Tensor& windows, std::size_t w, std::size_t batch, std::size_t height,
                      std::size_t width);

// ---------------------------------------------------------------------------
// Band attribution of two image-to-image systems.

using ImageSystem = std::function<Tensor(const Tensor&)>;

struct BandScores {
    double low_psnr = 0.0;
    double high_psnr = 0.0;
    double low_ssim = 0.0;
    double high_ssim = 0.0;
};

struct AttributionReport {
    BandScores a;
    BandScores b;
    BandScores difference;  // a - b

    /// Table with Low/High columns per system and the difference.
    std::string table(const std::string& name_a = "A", const std::string& name_b = "B") const;
};

/// Splits each output and its GT into the low band (u<k and v<k, including DC)
/// and the high band, and averages per-band PSNR/SSIM over the pairs.
AttributionReport high_frequency_attribution(const ImageSystem& system_a,
                                             const ImageSystem& system_b,
                                             const std::vector<ImagePair>& pairs, std::size_t k);

/// Low and high band images of x for cutoff k.
std::pair<Tensor, Tensor> split_bands(const Tensor& x, std::size_t k);

}  // namespace err::spectral
