#pragma once

#include <cstddef>
#include <vector>

#include "err/tensor.hpp"

// Differentiable primitives. Image tensors are laid out [B, C, H, W].
namespace err {

// Element-wise arithmetic with numpy-style broadcasting along size-1 axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
/// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
double gelu_value(double x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over one axis, keeping it with extent 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
/// out[i] = x[index[i]]; the adjoint scatters back (repeated indices add up).
Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
/// Splits `axis` into `parts` equal chunks.
std::vector<Tensor> split(const Tensor& x, std::size_t axis, std::size_t parts);

/// 2-D [m,k]x[k,n] or batched 3-D [b,m,k]x[b,k,n] product.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// 1x1 convolution: weight [C_out, C_in], optional bias [C_out].
Tensor conv2d_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());
/// Per-channel convolution, zero "same" padding: weight [C, kh, kw] with odd extents.
Tensor conv2d_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());
/// Normalizes over the channel axis of [B, C, H, W] at each pixel, then applies
/// gamma/beta of shape [C]. Either affine may be undefined (identity).
Tensor layernorm(const Tensor& x, const Tensor& gamma = Tensor(), const Tensor& beta = Tensor(),
                 double eps = 1e-6);

/// Adaptive average pooling to (out_h, out_w); extents must divide evenly.
Tensor avgpool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// Bilinear resampling, align_corners = false.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// Constant matrix for separable image transforms.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    static Matrix identity(std::size_t n);
};

/// out[b,c] = rows * x[b,c] * cols^T for every image plane. Linear in x.
Tensor separable_transform(const Tensor& x, const Matrix& rows, const Matrix& cols);
Matrix bilinear_matrix(std::size_t in, std::size_t out);

/// Reflect-pads the bottom and right edges of [B, C, H, W].
Tensor reflect_pad(const Tensor& x, std::size_t pad_bottom, std::size_t pad_right);
/// Keeps the top-left out_h x out_w region.
Tensor crop(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace err
