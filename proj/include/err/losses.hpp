#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>

#include "err/bundle.hpp"
#include "err/tensor.hpp"

namespace err::losses {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kSsimSigma = 1.5;
inline constexpr std::size_t kSsimWindow = 11;

Tensor l1_loss(const Tensor& a, const Tensor& b);
/// Mean SSIM over every pixel and channel; zero-padded Gaussian statistics.
Tensor ssim_index(const Tensor& a, const Tensor& b);
/// 1 - ssim_index.
Tensor ssim_loss(const Tensor& a, const Tensor& b);

/// |DC(a) - DC(b)| averaged over batch and channels (orthonormal DCT).
Tensor zero_freq_loss(const Tensor& out, const Tensor& gt);
/// Mean |dF| over {u<k, v<k} \ {(0,0)}.
Tensor low_freq_loss(const Tensor& out, const Tensor& gt, std::size_t k);
/// Mean |dF| over {u>=k or v>=k}.
Tensor high_freq_loss(const Tensor& out, const Tensor& gt, std::size_t k);
/// Sum of |dF| over the whole spectrum, averaged over batch and channels.
Tensor spectral_l1(const Tensor& out, const Tensor& gt);

struct Regularizers {
    bool zero = true;
    bool low = true;
    bool high = true;
};

struct LossReport {
    std::array<double, 3> l1{};
    std::array<double, 3> ssim{};
    double zf = 0.0;
    double lf = 0.0;
    double hf = 0.0;
    double total = 0.0;

    double component_sum() const;
};

struct LossResult {
    Tensor total;
    LossReport report;
};

/// Sum over stages of L1 + SSIM loss, plus the enabled band regularizers
/// (zero on stage 1, low on stage 2, high on stage 3). Unit weights.
LossResult total_loss(const StageBundle& bundle, const Tensor& gt, std::size_t k,
                      Regularizers regs = {});

void write_report_header(std::ostream& os);
void write_report_row(std::ostream& os, std::size_t step, double lr, const LossReport& r);

}  // namespace err::losses
