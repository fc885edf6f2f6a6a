#pragma once

#include "err/tensor.hpp"

namespace err {

/// Outputs of the three stages for one forward pass, plus the stage features
/// carried forward by the progressive residual.
struct StageBundle {
    Tensor o_s1;
    Tensor o_s2;
    Tensor o_s3;
    Tensor feat_s1;  // [B, C, H/8, W/8]
    Tensor feat_s2;  // [B, C, H/4, W/4]
};

}  // namespace err
