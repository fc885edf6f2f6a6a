#include "err/image.hpp"

#include <algorithm>

namespace err {

Tensor as_batch(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("as_batch expects [C,H,W], got " + shape_str(image.shape()));
    return Tensor(Shape{1, image.dim(0), image.dim(1), image.dim(2)}, image.vec());
}

Tensor stack_images(const std::vector<Tensor>& images) {
    if (images.empty()) throw ShapeError("stack_images of nothing");
    const Shape& s = images.front().shape();
    std::vector<double> data;
    data.reserve(images.size() * shape_numel(s));
    for (const auto& im : images) {
        if (im.shape() != s) {
            throw ShapeError("stack_images: " + shape_str(im.shape()) + " vs " + shape_str(s));
        }
        data.insert(data.end(), im.vec().begin(), im.vec().end());
    }
    Shape out{images.size()};
    out.insert(out.end(), s.begin(), s.end());
    return Tensor(out, std::move(data));
}

Tensor batch_item(const Tensor& batch, std::size_t n) {
    if (batch.rank() != 4 || n >= batch.dim(0)) throw ShapeError("batch_item out of range");
    const std::size_t sz = batch.numel() / batch.dim(0);
    const auto first = batch.vec().begin() + static_cast<std::ptrdiff_t>(n * sz);
    return Tensor(Shape{batch.dim(1), batch.dim(2), batch.dim(3)}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(sz)));
}

}  // namespace err
