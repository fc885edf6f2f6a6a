#include "err/tensor.hpp"

#include <sstream>

namespace err {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data has " + std::to_string(data.size()) +
                         " values but shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(shape, std::move(v));
}

Tensor Tensor::uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(shape, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

Tensor Tensor::clone() const {
    Tensor t(shape(), node_->data);
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
        throw std::logic_error("backward() on a loss that does not depend on any parameter");
    }
    loss.node().grad_buffer()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        detail::Node& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
    ops_.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

namespace {

template <typename Range>
Tensor build_result(Shape shape, std::vector<double> data, const Range& inputs,
                    detail::BackwardFn fn, Tensor (*wrap)(std::shared_ptr<detail::Node>)) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) track = track || (in.defined() && in.requires_grad());
    }
    if (track) {
        node->requires_grad = true;
        node->backward = std::move(fn);
        Tape::current().record(node);
    }
    return wrap(std::move(node));
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   detail::BackwardFn fn) {
    if (shape_numel(shape) != data.size()) throw ShapeError("op produced inconsistent output");
    return build_result(std::move(shape), std::move(data), inputs, std::move(fn),
                        [](std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); });
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   detail::BackwardFn fn) {
    if (shape_numel(shape) != data.size()) throw ShapeError("op produced inconsistent output");
    return build_result(std::move(shape), std::move(data), inputs, std::move(fn),
                        [](std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); });
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

void accumulate_grad(const Tensor& t, std::span<const double> g) {
    if (!wants_grad(t)) return;
    auto& buf = t.node().grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace err
