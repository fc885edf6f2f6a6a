#pragma once

#include <string>
#include <vector>

#include "err/tensor.hpp"

namespace err {

/// Degraded/ground-truth pair, each [3, H, W] with values in [0, 1].
struct ImagePair {
    Tensor degraded;
    Tensor gt;
    std::string id;
};

/// [C, H, W] -> [1, C, H, W] (shares no tape history; plain data copy).
Tensor as_batch(const Tensor& image);
/// Stacks equally shaped [C, H, W] images into [N, C, H, W].
Tensor stack_images(const std::vector<Tensor>& images);
/// Image n of a [B, C, H, W] batch as [C, H, W].
Tensor batch_item(const Tensor& batch, std::size_t n);

}  // namespace err
