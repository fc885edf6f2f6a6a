#pragma once

#include <cstddef>
#include <vector>

#include "err/tensor.hpp"

namespace err::optim {

/// lr(t) = lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2, held at lr_min past T.
struct CosineSchedule {
    double lr0 = 5e-4;
    double lr_min = 1e-7;
    std::size_t total = 1;

    double at(std::size_t t) const;
};

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWOptions options = {});

    /// Applies one update from the accumulated gradients. A non-finite gradient
    /// anywhere skips the whole step and returns false.
    bool step(double lr);
    void zero_grad();

    std::size_t steps() const { return t_; }
    std::size_t skipped() const { return skipped_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<Tensor> params_;
    AdamWOptions opt_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
    std::size_t skipped_ = 0;
};

}  // namespace err::optim
