#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace err {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operands cannot be combined because of their extents.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node;
using BackwardFn = std::function<void(const Node& out)>;

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something flows into it
    bool requires_grad = false;
    BackwardFn backward;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles, optionally participating in the
/// gradient tape. Copies share storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }
    static Tensor ones(const Shape& shape) { return Tensor(shape, 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
    static Tensor randn(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const& { return node_->data; }
    /// Direct write access; only meaningful for leaves (parameters, inputs).
    std::span<double> mutable_data() { return node_->data; }
    const std::vector<double>& vec() const& { return node_->data; }
    std::vector<double> vec() const&& { return node_->data; }
    double operator[](std::size_t i) const { return node_->data[i]; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const { return !node_->grad.empty(); }
    /// Accumulated gradient; zeros when nothing has flowed in yet.
    std::vector<double> grad() const;
    void zero_grad() { node_->grad.clear(); }

    Tensor clone() const;
    /// Same values, cut off from the tape.
    Tensor detach() const;

    detail::Node& node() const { return *node_; }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<Tensor>,
                              detail::BackwardFn);
    friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                              detail::BackwardFn);

    std::shared_ptr<detail::Node> node_;
};

/// Define-by-run record of executed operations. One tape per thread.
class Tape {
public:
    static Tape& current();

    void record(std::shared_ptr<detail::Node> node) { ops_.push_back(std::move(node)); }
    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    /// Reverse sweep from a scalar loss; consumes the tape.
    void backward(const Tensor& loss);

private:
    std::vector<std::shared_ptr<detail::Node>> ops_;
};

bool grad_enabled();

/// Disables recording for its lifetime (inference, optimizer updates).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

void backward(const Tensor& loss);

/// Builds an op output. When any input requires grad (and recording is on)
/// the output joins the tape with `fn` as its adjoint; otherwise `fn` is dropped.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   detail::BackwardFn fn);
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   detail::BackwardFn fn);

/// Adds `g` into `t`'s gradient if `t` participates in differentiation.
void accumulate_grad(const Tensor& t, std::span<const double> g);
bool wants_grad(const Tensor& t);

}  // namespace err
