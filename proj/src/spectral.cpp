#include "err/spectral.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "err/metrics.hpp"

namespace err::spectral {

namespace {

Matrix transposed(const Matrix& m) {
    Matrix t{m.cols, m.rows, std::vector<double>(m.v.size())};
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

Tensor batched(const Tensor& x) {
    if (x.rank() == 4) return x;
    if (x.rank() == 3) return reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)});
    throw ShapeError("expected [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

Matrix dct_matrix(std::size_t n) {
    Matrix m{n, n, std::vector<double>(n * n)};
    const double N = static_cast<double>(n);
    for (std::size_t u = 0; u < n; ++u) {
        const double a = u == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
        for (std::size_t i = 0; i < n; ++i)
            m(u, i) = a * std::cos((2.0 * static_cast<double>(i) + 1.0) * static_cast<double>(u) *
                                   std::numbers::pi / (2.0 * N));
    }
    return m;
}

Spectrum dct2(const Tensor& x) {
    Tensor xb = batched(x);
    return Spectrum{separable_transform(xb, dct_matrix(xb.dim(2)), dct_matrix(xb.dim(3)))};
}

Tensor idct2(const Spectrum& s) {
    return separable_transform(s.coeffs, transposed(dct_matrix(s.height())),
                               transposed(dct_matrix(s.width())));
}

// ---------------------------------------------------------------------------

void BandSpec::validate() const {
    if (k < 1 || k > std::min(height, width)) {
        throw std::out_of_range("frequency cutoff k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(std::min(height, width)) + "]");
    }
}

bool BandSpec::contains(Band band, std::size_t u, std::size_t v) const {
    const bool corner = u < k && v < k;
    switch (band) {
        case Band::Zero: return u == 0 && v == 0;
        case Band::Low: return corner && !(u == 0 && v == 0);
        case Band::High: return !corner;
        case Band::All: return true;
    }
    return false;
}

std::size_t BandSpec::count(Band band) const {
    std::size_t n = 0;
    for (std::size_t u = 0; u < height; ++u)
        for (std::size_t v = 0; v < width; ++v) n += contains(band, u, v) ? 1 : 0;
    return n;
}

Tensor band_mask(const BandSpec& spec, Band band) {
    spec.validate();
    Tensor m(Shape{1, 1, spec.height, spec.width}, 0.0);
    auto d = m.mutable_data();
    for (std::size_t u = 0; u < spec.height; ++u)
        for (std::size_t v = 0; v < spec.width; ++v)
            d[u * spec.width + v] = spec.contains(band, u, v) ? 1.0 : 0.0;
    return m;
}

Tensor band_mask(std::size_t height, std::size_t width, Band band, std::size_t k) {
    return band_mask(BandSpec{k, height, width}, band);
}

Tensor corner_mask(std::size_t height, std::size_t width, std::size_t k) {
    Tensor m(Shape{1, 1, height, width}, 0.0);
    auto d = m.mutable_data();
    for (std::size_t u = 0; u < std::min(k, height); ++u)
        for (std::size_t v = 0; v < std::min(k, width); ++v) d[u * width + v] = 1.0;
    return m;
}

std::pair<Tensor, Tensor> exchange(const Tensor& a, const Tensor& b, const Tensor& mask) {
    if (a.shape() != b.shape()) {
        throw ShapeError("exchange: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor fa = dct2(a).coeffs, fb = dct2(b).coeffs;
    Tensor keep = add(scale(mask, -1.0), 1.0);
    Tensor ea = idct2({fa * keep + fb * mask});
    Tensor eb = idct2({fb * keep + fa * mask});
    if (a.rank() == 3) return {reshape(ea, a.shape()), reshape(eb, b.shape())};
    return {ea, eb};
}

std::pair<Tensor, Tensor> exchange_band(const Tensor& a, const Tensor& b, Band band, std::size_t k) {
    const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
    return exchange(a, b, band_mask(H, W, band, k));
}

// ---------------------------------------------------------------------------

Tensor fill_low_frequencies(const Tensor& input, const Tensor& gt, std::size_t k) {
    const std::size_t H = input.dim(input.rank() - 2), W = input.dim(input.rank() - 1);
    return exchange(input, gt, corner_mask(H, W, k)).first;
}

std::vector<CurvePoint> progressive_fill_curve(const Tensor& input, const Tensor& gt,
                                               const std::vector<std::size_t>& ks) {
    if (input.shape() != gt.shape()) {
        throw ShapeError("progressive_fill_curve: " + shape_str(input.shape()) + " vs " +
                         shape_str(gt.shape()));
    }
    NoGradGuard ng;
    Tensor fi = dct2(input).coeffs, fg = dct2(gt).coeffs;
    const std::size_t H = fi.dim(2), W = fi.dim(3), planes = fi.dim(0) * fi.dim(1);
    std::vector<double> err2(fi.numel());
    for (std::size_t i = 0; i < err2.size(); ++i) err2[i] = (fi[i] - fg[i]) * (fi[i] - fg[i]);
    std::vector<CurvePoint> curve;
    for (std::size_t k : ks) {
        double e = 0.0;
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t u = 0; u < H; ++u)
                for (std::size_t v = 0; v < W; ++v)
                    if (!(u < k && v < k)) e += err2[(p * H + u) * W + v];
        curve.push_back({k, psnr_from_mse(e / static_cast<double>(err2.size()))});
    }
    return curve;
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
    os << "k,psnr\n";
    os << std::setprecision(10);
    for (const auto& p : curve) os << p.k << ',' << p.psnr << '\n';
}

// ---------------------------------------------------------------------------

Tensor window_partition(const Tensor& s, std::size_t w) {
    if (s.rank() != 4) throw ShapeError("window_partition expects [B,C,H,W]");
    const std::size_t B = s.dim(0), C = s.dim(1), H = s.dim(2), W = s.dim(3);
    if (w == 0 || H % w != 0 || W % w != 0) {
        throw ShapeError("window_partition: extents " + shape_str(s.shape()) +
                         " not divisible by window " + std::to_string(w));
    }
    const std::size_t nh = H / w, nw = W / w;
    std::vector<std::size_t> index;
    index.reserve(s.numel());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t ti = 0; ti < nh; ++ti)
            for (std::size_t tj = 0; tj < nw; ++tj)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t y = 0; y < w; ++y)
                        for (std::size_t x = 0; x < w; ++x)
                            index.push_back(((b * C + c) * H + ti * w + y) * W + tj * w + x);
    return gather(s, std::move(index), Shape{B * nh * nw, C, w, w});
}

Tensor window_reverse(const Tensor& windows, std::size_t w, std::size_t batch, std::size_t height,
                      std::size_t width) {
    if (w == 0 || height % w != 0 || width % w != 0) {
        throw ShapeError("window_reverse: extents not divisible by window " + std::to_string(w));
    }
    const std::size_t nh = height / w, nw = width / w;
    if (windows.rank() != 4 || windows.dim(0) != batch * nh * nw || windows.dim(2) != w ||
        windows.dim(3) != w) {
        throw ShapeError("window_reverse: " + shape_str(windows.shape()) + " does not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t C = windows.dim(1);
    std::vector<std::size_t> index;
    index.reserve(windows.numel());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < height; ++i)
                for (std::size_t j = 0; j < width; ++j) {
                    const std::size_t tile = (b * nh + i / w) * nw + j / w;
                    index.push_back(((tile * C + c) * w + i % w) * w + j % w);
                }
    return gather(windows, std::move(index), Shape{batch, C, height, width});
}

// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> split_bands(const Tensor& x, std::size_t k) {
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    BandSpec{k, H, W}.validate();
    Tensor f = dct2(x).coeffs;
    Tensor low_mask = corner_mask(H, W, k);
    Tensor high_mask = band_mask(H, W, Band::High, k);
    return {idct2({f * low_mask}), idct2({f * high_mask})};
}

namespace {

BandScores score_bands(const Tensor& out, const Tensor& gt, std::size_t k) {
    auto [ol, oh] = split_bands(out, k);
    auto [gl, gh] = split_bands(gt, k);
    return {psnr(ol, gl), psnr(oh, gh), ssim(ol, gl), ssim(oh, gh)};
}

}  // namespace

AttributionReport high_frequency_attribution(const ImageSystem& system_a,
                                             const ImageSystem& system_b,
                                             const std::vector<ImagePair>& pairs, std::size_t k) {
    if (pairs.empty()) throw std::invalid_argument("high_frequency_attribution: empty pair set");
    NoGradGuard ng;
    AttributionReport r;
    for (const auto& p : pairs) {
        const BandScores sa = score_bands(system_a(p.degraded), p.gt, k);
        const BandScores sb = score_bands(system_b(p.degraded), p.gt, k);
        r.a.low_psnr += sa.low_psnr;
        r.a.high_psnr += sa.high_psnr;
        r.a.low_ssim += sa.low_ssim;
        r.a.high_ssim += sa.high_ssim;
        r.b.low_psnr += sb.low_psnr;
        r.b.high_psnr += sb.high_psnr;
        r.b.low_ssim += sb.low_ssim;
        r.b.high_ssim += sb.high_ssim;
    }
    const double n = static_cast<double>(pairs.size());
    for (BandScores* s : {&r.a, &r.b}) {
        s->low_psnr /= n;
        s->high_psnr /= n;
        s->low_ssim /= n;
        s->high_ssim /= n;
    }
    r.difference = {r.a.low_psnr - r.b.low_psnr, r.a.high_psnr - r.b.high_psnr,
                    r.a.low_ssim - r.b.low_ssim, r.a.high_ssim - r.b.high_ssim};
    return r;
}

std::string AttributionReport::table(const std::string& name_a, const std::string& name_b) const {
    std::ostringstream os;
    os << std::fixed;
    os << "Method    | " << name_b << " (Low, High) | " << name_a << " (Low, High) | Difference (Low, High)\n";
    os << std::setprecision(2) << "PSNR      | " << b.low_psnr << ", " << b.high_psnr << " | "
       << a.low_psnr << ", " << a.high_psnr << " | " << difference.low_psnr << ", "
       << difference.high_psnr << '\n';
    os << std::setprecision(4) << "SSIM      | " << b.low_ssim << ", " << b.high_ssim << " | "
       << a.low_ssim << ", " << a.high_ssim << " | " << difference.low_ssim << ", "
       << difference.high_ssim << '\n';
    return os.str();
}

}  // namespace err::spectral
