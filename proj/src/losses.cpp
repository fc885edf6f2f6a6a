#include "err/losses.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "err/ops.hpp"
#include "err/spectral.hpp"

namespace err::losses {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.defined() || !b.defined()) throw std::invalid_argument(std::string(what) + ": missing operand");
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

Tensor as4d(const Tensor& x) {
    if (x.rank() == 4) return x;
    if (x.rank() == 3) return reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)});
    throw ShapeError("expected an image tensor, got " + shape_str(x.shape()));
}

// Gaussian filtering as a banded matrix; rows near the border lose the taps
// that fall outside the image (zero padding).
Matrix gaussian_matrix(std::size_t n) {
    const long r = static_cast<long>(kSsimWindow / 2);
    std::vector<double> taps(kSsimWindow);
    double z = 0.0;
    for (long i = -r; i <= r; ++i) {
        taps[static_cast<std::size_t>(i + r)] = std::exp(-static_cast<double>(i * i) / (2.0 * kSsimSigma * kSsimSigma));
        z += taps[static_cast<std::size_t>(i + r)];
    }
    for (auto& t : taps) t /= z;
    Matrix m{n, n, std::vector<double>(n * n, 0.0)};
    const long nl = static_cast<long>(n);
    for (long i = 0; i < nl; ++i)
        for (long d = -r; d <= r; ++d) {
            const long j = i + d;
            if (j >= 0 && j < nl) m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = taps[static_cast<std::size_t>(d + r)];
        }
    return m;
}

Tensor band_l1(const Tensor& out, const Tensor& gt, spectral::Band band, std::size_t k) {
    require_same(out, gt, "band loss");
    Tensor o = as4d(out), g = as4d(gt);
    const std::size_t H = o.dim(2), W = o.dim(3);
    const spectral::BandSpec spec{k, H, W};
    spec.validate();
    Tensor diff = spectral::dct2(o - g).coeffs;
    Tensor masked = abs(diff) * spectral::band_mask(spec, band);
    const double count = static_cast<double>(std::max<std::size_t>(spec.count(band), 1));
    return scale(sum(masked), 1.0 / (count * static_cast<double>(o.dim(0) * o.dim(1))));
}

}  // namespace

Tensor l1_loss(const Tensor& a, const Tensor& b) {
    require_same(a, b, "l1_loss");
    return mean(abs(a - b));
}

Tensor ssim_index(const Tensor& a, const Tensor& b) {
    require_same(a, b, "ssim");
    Tensor x = as4d(a), y = as4d(b);
    const Matrix gr = gaussian_matrix(x.dim(2));
    const Matrix gc = gaussian_matrix(x.dim(3));
    auto blur = [&](const Tensor& t) { return separable_transform(t, gr, gc); };
    Tensor mx = blur(x), my = blur(y);
    Tensor mxx = square(mx), myy = square(my), mxy = mx * my;
    Tensor vx = blur(square(x)) - mxx;
    Tensor vy = blur(square(y)) - myy;
    Tensor cxy = blur(x * y) - mxy;
    Tensor num = (scale(mxy, 2.0) + kSsimC1) * (scale(cxy, 2.0) + kSsimC2);
    Tensor den = (mxx + myy + kSsimC1) * (vx + vy + kSsimC2);
    return mean(num / den);
}

Tensor ssim_loss(const Tensor& a, const Tensor& b) { return add(neg(ssim_index(a, b)), 1.0); }

Tensor zero_freq_loss(const Tensor& out, const Tensor& gt) {
    require_same(out, gt, "zero_freq_loss");
    Tensor o = as4d(out), g = as4d(gt);
    const double root = std::sqrt(static_cast<double>(o.dim(2) * o.dim(3)));
    // Orthonormal DCT-II: F(0,0) = sqrt(HW) * mean.
    Tensor dc = scale(avgpool2d(o - g, 1, 1), root);
    return mean(abs(dc));
}

Tensor low_freq_loss(const Tensor& out, const Tensor& gt, std::size_t k) {
    return band_l1(out, gt, spectral::Band::Low, k);
}

Tensor high_freq_loss(const Tensor& out, const Tensor& gt, std::size_t k) {
    return band_l1(out, gt, spectral::Band::High, k);
}

Tensor spectral_l1(const Tensor& out, const Tensor& gt) {
    require_same(out, gt, "spectral_l1");
    Tensor o = as4d(out), g = as4d(gt);
    Tensor diff = spectral::dct2(o - g).coeffs;
    return scale(sum(abs(diff)), 1.0 / static_cast<double>(o.dim(0) * o.dim(1)));
}

double LossReport::component_sum() const {
    double t = 0.0;
    for (int s = 0; s < 3; ++s) t = t + l1[s] + ssim[s];
    return t + zf + lf + hf;
}

LossResult total_loss(const StageBundle& bundle, const Tensor& gt, std::size_t k, Regularizers regs) {
    const Tensor* outs[3] = {&bundle.o_s1, &bundle.o_s2, &bundle.o_s3};
    for (int s = 0; s < 3; ++s) {
        if (!outs[s]->defined()) {
            throw std::invalid_argument("total_loss: stage " + std::to_string(s + 1) + " output missing");
        }
    }
    LossResult res;
    Tensor total;
    auto accumulate = [&](const Tensor& term) { total = total.defined() ? total + term : term; };
    for (int s = 0; s < 3; ++s) {
        Tensor l1 = l1_loss(*outs[s], gt);
        Tensor ss = ssim_loss(*outs[s], gt);
        res.report.l1[s] = l1.item();
        res.report.ssim[s] = ss.item();
        accumulate(l1);
        accumulate(ss);
    }
    if (regs.zero) {
        Tensor t = zero_freq_loss(bundle.o_s1, gt);
        res.report.zf = t.item();
        accumulate(t);
    }
    if (regs.low) {
        Tensor t = low_freq_loss(bundle.o_s2, gt, k);
        res.report.lf = t.item();
        accumulate(t);
    }
    if (regs.high) {
        Tensor t = high_freq_loss(bundle.o_s3, gt, k);
        res.report.hf = t.item();
        accumulate(t);
    }
    res.total = total;
    res.report.total = total.item();
    return res;
}

void write_report_header(std::ostream& os) {
    os << "step,lr,l1_s1,l1_s2,l1_s3,ssim_s1,ssim_s2,ssim_s3,lzf,llf,lhf,total\n";
}

void write_report_row(std::ostream& os, std::size_t step, double lr, const LossReport& r) {
    os << std::setprecision(17) << step << ',' << lr << ',' << r.l1[0] << ',' << r.l1[1] << ','
       << r.l1[2] << ',' << r.ssim[0] << ',' << r.ssim[1] << ',' << r.ssim[2] << ',' << r.zf << ','
       << r.lf << ',' << r.hf << ',' << r.total << '\n';
}

}  // namespace err::losses
