#include "err/optim.hpp"

#include <cmath>
#include <numbers>

namespace err::optim {

double CosineSchedule::at(std::size_t t) const {
    if (total == 0 || t >= total) return total == 0 ? lr0 : lr_min;
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions options) : params_(std::move(params)), opt_(options) {
    for (const auto& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

bool AdamW::step(double lr) {
    for (const auto& p : params_) {
        if (!p.has_grad()) continue;
        for (double g : p.node().grad)
            if (!std::isfinite(g)) {
                ++skipped_;
                return false;
            }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        auto w = p.mutable_data();
        const auto& g = p.node().grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * gj;
            v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * gj * gj;
            w[j] -= lr * opt_.weight_decay * w[j];
            w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt_.eps);
        }
    }
    return true;
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace err::optim
