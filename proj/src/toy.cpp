#include <random>

#include "err/harness.hpp"
#include "err/nn.hpp"
#include "err/optim.hpp"

namespace err::harness {

namespace {

// pw 3->C, dw, pw C->C, dw, pw C->3 plus the input. With `nonlinear` off
// every activation is the identity and the whole net is one linear filter.
struct ToyNet {
    nn::Pointwise in, mid, out;
    nn::Depthwise dw1, dw2;
    bool nonlinear = true;

    static ToyNet make(std::size_t c, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        ToyNet n;
        n.in = nn::Pointwise::make(3, c, rng);
        n.dw1 = nn::Depthwise::make(c, rng);
        n.mid = nn::Pointwise::make(c, c, rng);
        n.dw2 = nn::Depthwise::make(c, rng);
        n.out = nn::Pointwise::zeros(c, 3);
        return n;
    }
    Tensor act(const Tensor& x) const { return nonlinear ? gelu(x) : x; }
    Tensor operator()(const Tensor& x) const {
        Tensor h = act(in(x));
        h = act(dw1(h));
        h = act(mid(h));
        h = act(dw2(h));
        return out(h) + x;
    }
    void visit(const nn::Visitor& fn) {
        in.visit("in", fn);
        dw1.visit("dw1", fn);
        mid.visit("mid", fn);
        dw2.visit("dw2", fn);
        out.visit("out", fn);
    }
    ToyNet clone() const {
        ToyNet c = *this;
        c.visit([](const std::string&, Tensor& t) { t = Tensor(t.shape(), t.vec(), true); });
        return c;
    }
};

double fit(ToyNet& net, const std::vector<ImagePair>& pairs, const ToyOptions& o) {
    std::vector<Tensor> params;
    net.visit([&](const std::string&, Tensor& t) { params.push_back(t); });
    optim::AdamW opt(params);
    std::vector<Tensor> xs, ys;
    for (const auto& p : pairs) {
        xs.push_back(as_batch(p.degraded));
        ys.push_back(as_batch(p.gt));
    }
    double last = 0.0;
    for (std::size_t step = 0; step < o.steps; ++step) {
        const std::size_t i = step % pairs.size();
        opt.zero_grad();
        Tensor l = losses::l1_loss(net(xs[i]), ys[i]);
        last = l.item();
        backward(l);
        opt.step(o.lr);
    }
    return last;
}

}  // namespace

ToyComparison linear_vs_nonlinear(const std::vector<ImagePair>& train_pairs, const std::vector<ImagePair>& test_pairs,
                                  const ToyOptions& options) {
    if (train_pairs.empty() || test_pairs.empty()) throw std::invalid_argument("linear_vs_nonlinear: empty pair set");
    ToyNet nonlinear = ToyNet::make(options.channels, options.seed);
    ToyNet linear = nonlinear.clone();
    linear.nonlinear = false;

    ToyComparison r;
    r.nonlinear_final_loss = fit(nonlinear, train_pairs, options);
    r.linear_final_loss = fit(linear, train_pairs, options);
    auto system = [](const ToyNet& net) {
        return [&net](const Tensor& img) { return batch_item(net(as_batch(img)), 0); };
    };
    r.report = spectral::high_frequency_attribution(system(nonlinear), system(linear), test_pairs, options.k);
    return r;
}

}  // namespace err::harness
