#include "err/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace err {
namespace {

// ---------------------------------------------------------------------------
// Dense kernels. All accumulate into C.

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* b = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            if (a == 0.0) continue;
            double* c = C + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t n,
             std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* b = B + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += a[j] * b[j];
            C[i * k + p] += s;
        }
    }
}

void require_rank(const Tensor& x, std::size_t r, const char* op) {
    if (x.rank() != r) {
        throw ShapeError(std::string(op) + " expects rank " + std::to_string(r) + ", got " +
                         shape_str(x.shape()));
    }
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
    Shape out;
    bool same = false;
    std::vector<std::size_t> ia;
    std::vector<std::size_t> ib;
};

std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    Shape padded(r, 1);
    std::copy(in.begin(), in.end(), padded.begin() + static_cast<std::ptrdiff_t>(r - in.size()));
    std::vector<std::size_t> stride(r, 0);
    std::size_t s = 1;
    for (std::size_t d = r; d-- > 0;) {
        stride[d] = padded[d] == 1 ? 0 : s;
        s *= padded[d];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> coord(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = off;
        for (std::size_t d = r; d-- > 0;) {
            ++coord[d];
            off += stride[d];
            if (coord[d] < out[d]) break;
            off -= stride[d] * coord[d];
            coord[d] = 0;
        }
    }
    return idx;
}

Broadcast plan_broadcast(const Tensor& a, const Tensor& b) {
    Broadcast p;
    if (a.shape() == b.shape()) {
        p.out = a.shape();
        p.same = true;
        return p;
    }
    p.out = broadcast_shape(a.shape(), b.shape());
    p.ia = broadcast_index(a.shape(), p.out);
    p.ib = broadcast_index(b.shape(), p.out);
    return p;
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, Fwd f, DA da, DB db) {
    auto plan = std::make_shared<Broadcast>(plan_broadcast(a, b));
    const std::size_t n = shape_numel(plan->out);
    std::vector<double> out(n);
    const auto& av = a.vec();
    const auto& bv = b.vec();
    if (plan->same) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(av[plan->ia[i]], bv[plan->ib[i]]);
    }
    return make_result(plan->out, std::move(out), {a, b}, [a, b, plan, da, db](const detail::Node& o) {
        const auto& g = o.grad;
        const auto& av = a.vec();
        const auto& bv = b.vec();
        const std::size_t n = g.size();
        if (wants_grad(a)) {
            auto& ga = a.node().grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ia = plan->same ? i : plan->ia[i];
                const std::size_t ib = plan->same ? i : plan->ib[i];
                ga[ia] += g[i] * da(av[ia], bv[ib]);
            }
        }
        if (wants_grad(b)) {
            auto& gb = b.node().grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ia = plan->same ? i : plan->ia[i];
                const std::size_t ib = plan->same ? i : plan->ib[i];
                gb[ib] += g[i] * db(av[ia], bv[ib]);
            }
        }
    });
}

// df receives (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd f, Deriv df) {
    const auto& xv = x.vec();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return make_result(x.shape(), std::move(out), {x}, [x, df](const detail::Node& o) {
        const auto& xv = x.vec();
        auto& gx = x.node().grad_buffer();
        for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += o.grad[i] * df(xv[i], o.data[i]);
    });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double softplus_value(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary(
        x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
    return unary(x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, [](double v) { return v > 0 ? v : 0.0; },
        [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
    return unary(
        x, [](double v) { return v * sigmoid_value(v); },
        [](double v, double) {
            const double s = sigmoid_value(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Tensor gelu(const Tensor& x) {
    return unary(x, gelu_value, [](double v, double) { return gelu_grad(v); });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    return make_result(Shape{1}, {s}, {x}, [x](const detail::Node& o) {
        auto& gx = x.node().grad_buffer();
        for (auto& g : gx) g += o.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw ShapeError("sum_axis: axis out of range for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];
    Shape os = s;
    os[axis] = 1;
    std::vector<double> out(outer * inner, 0.0);
    const auto& xv = x.vec();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                out[o * inner + i] += xv[(o * len + l) * inner + i];
    return make_result(os, std::move(out), {x}, [x, outer, inner, len](const detail::Node& o) {
        auto& gx = x.node().grad_buffer();
        for (std::size_t a = 0; a < outer; ++a)
            for (std::size_t l = 0; l < len; ++l)
                for (std::size_t i = 0; i < inner; ++i)
                    gx[(a * len + l) * inner + i] += o.grad[a * inner + i];
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    return make_result(std::move(shape), x.vec(), {x},
                       [x](const detail::Node& o) { accumulate_grad(x, o.grad); });
}

Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape) {
    if (shape_numel(out_shape) != index.size()) throw ShapeError("gather: index/shape mismatch");
    const auto& xv = x.vec();
    std::vector<double> out(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= xv.size()) throw ShapeError("gather: index out of range");
        out[i] = xv[index[i]];
    }
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::move(index));
    return make_result(std::move(out_shape), std::move(out), {x}, [x, idx](const detail::Node& o) {
        auto& gx = x.node().grad_buffer();
        const auto& ix = *idx;
        for (std::size_t i = 0; i < ix.size(); ++i) gx[ix[i]] += o.grad[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const Shape& s = x.shape();
    const std::size_t r = s.size();
    if (order.size() != r) throw ShapeError("permute: order rank mismatch for " + shape_str(s));
    std::vector<std::size_t> in_stride(r);
    std::size_t st = 1;
    for (std::size_t d = r; d-- > 0;) {
        in_stride[d] = st;
        st *= s[d];
    }
    Shape os(r);
    std::vector<std::size_t> stride(r);
    for (std::size_t d = 0; d < r; ++d) {
        if (order[d] >= r) throw ShapeError("permute: bad axis");
        os[d] = s[order[d]];
        stride[d] = in_stride[order[d]];
    }
    const std::size_t n = x.numel();
    std::vector<std::size_t> index(n);
    std::vector<std::size_t> coord(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        index[i] = off;
        for (std::size_t d = r; d-- > 0;) {
            ++coord[d];
            off += stride[d];
            if (coord[d] < os[d]) break;
            off -= stride[d] * coord[d];
            coord[d] = 0;
        }
    }
    return gather(x, std::move(index), os);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& s = x.shape();
    if (axis >= s.size() || start + length > s[axis]) {
        throw ShapeError("slice out of range on " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape os = s;
    os[axis] = length;
    std::vector<std::size_t> index;
    index.reserve(outer * length * inner);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < length; ++l)
            for (std::size_t i = 0; i < inner; ++i)
                index.push_back((o * s[axis] + start + l) * inner + i);
    return gather(x, std::move(index), os);
}

std::vector<Tensor> split(const Tensor& x, std::size_t axis, std::size_t parts) {
    const std::size_t len = x.dim(axis);
    if (parts == 0 || len % parts != 0) {
        throw ShapeError("split: axis extent " + std::to_string(len) + " not divisible by " +
                         std::to_string(parts));
    }
    std::vector<Tensor> out;
    const std::size_t chunk = len / parts;
    for (std::size_t p = 0; p < parts; ++p) out.push_back(slice(x, axis, p * chunk, chunk));
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat of nothing");
    Shape os = xs[0].shape();
    if (axis >= os.size()) throw ShapeError("concat: axis out of range");
    std::size_t total = 0;
    for (const auto& t : xs) {
        Shape a = t.shape(), b = os;
        if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
        a[axis] = b[axis] = 0;
        if (a != b) throw ShapeError("concat: " + shape_str(t.shape()) + " vs " + shape_str(os));
        total += t.dim(axis);
    }
    os[axis] = total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= os[d];
    for (std::size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];
    std::vector<double> out(shape_numel(os));
    std::size_t offset = 0;
    for (const auto& t : xs) {
        const std::size_t len = t.dim(axis);
        const auto& tv = t.vec();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
        offset += len;
    }
    return make_result(os, std::move(out), xs, [xs, outer, inner, total, axis](const detail::Node& o) {
        std::size_t offset = 0;
        for (const auto& t : xs) {
            const std::size_t len = t.dim(axis);
            if (wants_grad(t)) {
                auto& g = t.node().grad_buffer();
                for (std::size_t a = 0; a < outer; ++a)
                    for (std::size_t i = 0; i < len * inner; ++i)
                        g[a * len * inner + i] += o.grad[(a * total + offset) * inner + i];
            }
            offset += len;
        }
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    const bool batched = a.rank() == 3;
    if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3))) {
        throw ShapeError("matmul expects 2-D or 3-D operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t nb = batched ? a.dim(0) : 1;
    const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    const std::size_t k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (k != k2 || (batched && b.dim(0) != nb)) {
        throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(nb * m * n, 0.0);
    for (std::size_t q = 0; q < nb; ++q)
        gemm_nn(a.vec().data() + q * m * k, b.vec().data() + q * k * n, out.data() + q * m * n, m, k,
                n);
    Shape os = batched ? Shape{nb, m, n} : Shape{m, n};
    return make_result(os, std::move(out), {a, b}, [a, b, nb, m, k, n](const detail::Node& o) {
        const double* g = o.grad.data();
        if (wants_grad(a)) {
            auto& ga = a.node().grad_buffer();
            for (std::size_t q = 0; q < nb; ++q)
                gemm_nt(g + q * m * n, b.vec().data() + q * k * n, ga.data() + q * m * k, m, n, k);
        }
        if (wants_grad(b)) {
            auto& gb = b.node().grad_buffer();
            for (std::size_t q = 0; q < nb; ++q)
                gemm_tn(a.vec().data() + q * m * k, g + q * m * n, gb.data() + q * k * n, m, k, n);
        }
    });
}

Tensor transpose_last(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last needs rank >= 2");
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[x.rank() - 1], order[x.rank() - 2]);
    return permute(x, order);
}

Tensor softmax(const Tensor& x) {
    const std::size_t n = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / n;
    const auto& xv = x.vec();
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * n;
        double* y = out.data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    return make_result(x.shape(), std::move(out), {x}, [x, rows, n](const detail::Node& o) {
        auto& gx = x.node().grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = o.data.data() + r * n;
            const double* g = o.grad.data() + r * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * g[j];
            for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// Convolutions and normalization

Tensor conv2d_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 4, "conv2d_pointwise");
    require_rank(weight, 2, "conv2d_pointwise weight");
    const std::size_t B = x.dim(0), Ci = x.dim(1), HW = x.dim(2) * x.dim(3);
    const std::size_t Co = weight.dim(0);
    if (weight.dim(1) != Ci) {
        throw ShapeError("conv2d_pointwise: weight " + shape_str(weight.shape()) +
                         " does not accept input " + shape_str(x.shape()));
    }
    if (bias.defined() && bias.numel() != Co) throw ShapeError("conv2d_pointwise: bias size");
    std::vector<double> out(B * Co * HW, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        double* ob = out.data() + b * Co * HW;
        if (bias.defined())
            for (std::size_t o = 0; o < Co; ++o) std::fill_n(ob + o * HW, HW, bias[o]);
        gemm_nn(weight.vec().data(), x.vec().data() + b * Ci * HW, ob, Co, Ci, HW);
    }
    Shape os{B, Co, x.dim(2), x.dim(3)};
    return make_result(os, std::move(out), {x, weight, bias},
                       [x, weight, bias, B, Ci, Co, HW](const detail::Node& o) {
                           const double* g = o.grad.data();
                           if (wants_grad(x)) {
                               auto& gx = x.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   gemm_tn(weight.vec().data(), g + b * Co * HW,
                                           gx.data() + b * Ci * HW, Co, Ci, HW);
                           }
                           if (wants_grad(weight)) {
                               auto& gw = weight.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   gemm_nt(g + b * Co * HW, x.vec().data() + b * Ci * HW, gw.data(),
                                           Co, HW, Ci);
                           }
                           if (wants_grad(bias)) {
                               auto& gb = bias.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   for (std::size_t c = 0; c < Co; ++c) {
                                       const double* gc = g + (b * Co + c) * HW;
                                       gb[c] += std::accumulate(gc, gc + HW, 0.0);
                                   }
                           }
                       });
}

Tensor conv2d_depthwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 4, "conv2d_depthwise");
    require_rank(weight, 3, "conv2d_depthwise weight");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t kh = weight.dim(1), kw = weight.dim(2);
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw ShapeError("conv2d_depthwise: kernel extents must be odd, got " +
                         shape_str(weight.shape()));
    }
    if (weight.dim(0) != C) {
        throw ShapeError("conv2d_depthwise: weight " + shape_str(weight.shape()) + " vs input " +
                         shape_str(x.shape()));
    }
    if (bias.defined() && bias.numel() != C) throw ShapeError("conv2d_depthwise: bias size");
    const long rh = static_cast<long>(kh / 2), rw = static_cast<long>(kw / 2);
    const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
    std::vector<double> out(x.numel(), 0.0);
    const auto& xv = x.vec();
    const auto& wv = weight.vec();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* in = xv.data() + (b * C + c) * H * W;
            double* y = out.data() + (b * C + c) * H * W;
            const double* k = wv.data() + c * kh * kw;
            const double b0 = bias.defined() ? bias[c] : 0.0;
            for (long i = 0; i < Hl; ++i)
                for (long j = 0; j < Wl; ++j) {
                    double s = b0;
                    for (long di = -rh; di <= rh; ++di) {
                        const long ii = i + di;
                        if (ii < 0 || ii >= Hl) continue;
                        for (long dj = -rw; dj <= rw; ++dj) {
                            const long jj = j + dj;
                            if (jj < 0 || jj >= Wl) continue;
                            s += k[(di + rh) * static_cast<long>(kw) + dj + rw] * in[ii * Wl + jj];
                        }
                    }
                    y[i * Wl + j] = s;
                }
        }
    return make_result(x.shape(), std::move(out), {x, weight, bias},
                       [x, weight, bias, B, C, H, W, kh, kw](const detail::Node& o) {
                           const long rh = static_cast<long>(kh / 2), rw = static_cast<long>(kw / 2);
                           const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
                           const bool gxw = wants_grad(x), gww = wants_grad(weight);
                           double* gx = gxw ? x.node().grad_buffer().data() : nullptr;
                           double* gw = gww ? weight.node().grad_buffer().data() : nullptr;
                           const auto& xv = x.vec();
                           const auto& wv = weight.vec();
                           for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t c = 0; c < C; ++c) {
                                   const std::size_t base = (b * C + c) * H * W;
                                   const double* g = o.grad.data() + base;
                                   const double* in = xv.data() + base;
                                   const double* k = wv.data() + c * kh * kw;
                                   for (long i = 0; i < Hl; ++i)
                                       for (long j = 0; j < Wl; ++j) {
                                           const double gv = g[i * Wl + j];
                                           if (gv == 0.0) continue;
                                           for (long di = -rh; di <= rh; ++di) {
                                               const long ii = i + di;
                                               if (ii < 0 || ii >= Hl) continue;
                                               for (long dj = -rw; dj <= rw; ++dj) {
                                                   const long jj = j + dj;
                                                   if (jj < 0 || jj >= Wl) continue;
                                                   const long ki = (di + rh) * static_cast<long>(kw) + dj + rw;
                                                   if (gx) gx[base + ii * Wl + jj] += k[ki] * gv;
                                                   if (gw) gw[c * kh * kw + ki] += in[ii * Wl + jj] * gv;
                                               }
                                           }
                                       }
                               }
                           if (wants_grad(bias)) {
                               auto& gb = bias.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   for (std::size_t c = 0; c < C; ++c) {
                                       const double* g = o.grad.data() + (b * C + c) * H * W;
                                       gb[c] += std::accumulate(g, g + H * W, 0.0);
                                   }
                           }
                       });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(x, 4, "layernorm");
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (C == 0) throw ShapeError("layernorm over an empty channel axis");
    if ((gamma.defined() && gamma.numel() != C) || (beta.defined() && beta.numel() != C)) {
        throw ShapeError("layernorm affine size does not match channels of " + shape_str(x.shape()));
    }
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(B * HW);
    std::vector<double> out(x.numel());
    const auto& xv = x.vec();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < HW; ++p) {
            double mu = 0.0;
            for (std::size_t c = 0; c < C; ++c) mu += xv[(b * C + c) * HW + p];
            mu /= static_cast<double>(C);
            double var = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double d = xv[(b * C + c) * HW + p] - mu;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[b * HW + p] = is;
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t i = (b * C + c) * HW + p;
                const double h = (xv[i] - mu) * is;
                (*xhat)[i] = h;
                out[i] = (gamma.defined() ? gamma[c] : 1.0) * h + (beta.defined() ? beta[c] : 0.0);
            }
        }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [x, gamma, beta, xhat, inv_std, B, C, HW](const detail::Node& o) {
                           const auto& g = o.grad;
                           const auto& xh = *xhat;
                           if (wants_grad(gamma)) {
                               auto& gg = gamma.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   for (std::size_t c = 0; c < C; ++c)
                                       for (std::size_t p = 0; p < HW; ++p) {
                                           const std::size_t i = (b * C + c) * HW + p;
                                           gg[c] += g[i] * xh[i];
                                       }
                           }
                           if (wants_grad(beta)) {
                               auto& gb = beta.node().grad_buffer();
                               for (std::size_t b = 0; b < B; ++b)
                                   for (std::size_t c = 0; c < C; ++c)
                                       for (std::size_t p = 0; p < HW; ++p)
                                           gb[c] += g[(b * C + c) * HW + p];
                           }
                           if (!wants_grad(x)) return;
                           auto& gx = x.node().grad_buffer();
                           const double invC = 1.0 / static_cast<double>(C);
                           for (std::size_t b = 0; b < B; ++b)
                               for (std::size_t p = 0; p < HW; ++p) {
                                   double m1 = 0.0, m2 = 0.0;
                                   for (std::size_t c = 0; c < C; ++c) {
                                       const std::size_t i = (b * C + c) * HW + p;
                                       const double gh = g[i] * (gamma.defined() ? gamma[c] : 1.0);
                                       m1 += gh;
                                       m2 += gh * xh[i];
                                   }
                                   m1 *= invC;
                                   m2 *= invC;
                                   const double is = (*inv_std)[b * HW + p];
                                   for (std::size_t c = 0; c < C; ++c) {
                                       const std::size_t i = (b * C + c) * HW + p;
                                       const double gh = g[i] * (gamma.defined() ? gamma[c] : 1.0);
                                       gx[i] += is * (gh - m1 - xh[i] * m2);
                                   }
                               }
                       });
}

// ---------------------------------------------------------------------------
// Resampling

Tensor avgpool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "avgpool2d");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (out_h == 0 || out_w == 0) throw ShapeError("avgpool2d: target size must be positive");
    if (H % out_h != 0 || W % out_w != 0) {
        throw ShapeError("avgpool2d: " + shape_str(x.shape()) + " not divisible into " +
                         std::to_string(out_h) + "x" + std::to_string(out_w) + " cells");
    }
    const std::size_t ph = H / out_h, pw = W / out_w;
    const double inv = 1.0 / static_cast<double>(ph * pw);
    std::vector<double> out(B * C * out_h * out_w, 0.0);
    const auto& xv = x.vec();
    for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                out[(bc * out_h + i / ph) * out_w + j / pw] += xv[(bc * H + i) * W + j];
    for (auto& v : out) v *= inv;
    return make_result(Shape{B, C, out_h, out_w}, std::move(out), {x},
                       [x, B, C, H, W, out_h, out_w, ph, pw, inv](const detail::Node& o) {
                           auto& gx = x.node().grad_buffer();
                           for (std::size_t bc = 0; bc < B * C; ++bc)
                               for (std::size_t i = 0; i < H; ++i)
                                   for (std::size_t j = 0; j < W; ++j)
                                       gx[(bc * H + i) * W + j] +=
                                           inv * o.grad[(bc * out_h + i / ph) * out_w + j / pw];
                       });
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix bilinear_matrix(std::size_t in, std::size_t out) {
    Matrix m{out, in, std::vector<double>(out * in, 0.0)};
    const double sc = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * sc - 0.5;
        if (src < 0) src = 0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        const double l1 = src - static_cast<double>(i0);
        m(o, i0) += 1.0 - l1;
        m(o, i1) += l1;
    }
    return m;
}

Tensor separable_transform(const Tensor& x, const Matrix& rows, const Matrix& cols) {
    require_rank(x, 4, "separable_transform");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (rows.cols != H || cols.cols != W) {
        throw ShapeError("separable_transform: matrices " + std::to_string(rows.rows) + "x" +
                         std::to_string(rows.cols) + ", " + std::to_string(cols.rows) + "x" +
                         std::to_string(cols.cols) + " do not fit " + shape_str(x.shape()));
    }
    const std::size_t OH = rows.rows, OW = cols.rows;
    auto R = std::make_shared<const Matrix>(rows);
    auto K = std::make_shared<const Matrix>(cols);
    std::vector<double> out(B * C * OH * OW, 0.0);
    std::vector<double> tmp(OH * W);
    for (std::size_t p = 0; p < B * C; ++p) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        gemm_nn(R->v.data(), x.vec().data() + p * H * W, tmp.data(), OH, H, W);
        gemm_nt(tmp.data(), K->v.data(), out.data() + p * OH * OW, OH, W, OW);
    }
    return make_result(Shape{B, C, OH, OW}, std::move(out), {x},
                       [x, R, K, B, C, H, W, OH, OW](const detail::Node& o) {
                           auto& gx = x.node().grad_buffer();
                           std::vector<double> tmp(OH * W);
                           for (std::size_t p = 0; p < B * C; ++p) {
                               std::fill(tmp.begin(), tmp.end(), 0.0);
                               gemm_nn(o.grad.data() + p * OH * OW, K->v.data(), tmp.data(), OH, OW, W);
                               gemm_tn(R->v.data(), tmp.data(), gx.data() + p * H * W, OH, H, W);
                           }
                       });
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: target size must be positive");
    return separable_transform(x, bilinear_matrix(x.dim(2), out_h), bilinear_matrix(x.dim(3), out_w));
}

Tensor reflect_pad(const Tensor& x, std::size_t pad_bottom, std::size_t pad_right) {
    require_rank(x, 4, "reflect_pad");
    const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    if ((pad_bottom > 0 && pad_bottom >= H) || (pad_right > 0 && pad_right >= W)) {
        throw ShapeError("reflect_pad: padding must be smaller than the extent of " +
                         shape_str(x.shape()));
    }
    const std::size_t OH = H + pad_bottom, OW = W + pad_right;
    auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * (n - 1) - i; };
    std::vector<std::size_t> index;
    index.reserve(BC * OH * OW);
    for (std::size_t p = 0; p < BC; ++p)
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j)
                index.push_back((p * H + reflect(i, H)) * W + reflect(j, W));
    return gather(x, std::move(index), Shape{x.dim(0), x.dim(1), OH, OW});
}

Tensor crop(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "crop");
    const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    if (out_h > H || out_w > W) throw ShapeError("crop larger than " + shape_str(x.shape()));
    std::vector<std::size_t> index;
    index.reserve(BC * out_h * out_w);
    for (std::size_t p = 0; p < BC; ++p)
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) index.push_back((p * H + i) * W + j);
    return gather(x, std::move(index), Shape{x.dim(0), x.dim(1), out_h, out_w});
}

}  // namespace err
