#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairprior/nn.hpp"
#include "fairprior/rng.hpp"

using namespace fairprior;
using namespace fairprior::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Scalar loss: weighted sum of the network output against fixed coefficients.
double weighted_sum(Sequential& net, const Tensor& x, const std::vector<float>& coef) {
    Tensor y = const_cast<Sequential&>(net).forward(x, true);
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += static_cast<double>(y.data[static_cast<size_t>(i)]) * coef[static_cast<size_t>(i)];
    return s;
}

// Central differences at several step sizes; a kink crossing poisons one
// step size but not all, while a wrong analytic gradient fails every one.
bool fd_matches(float& slot, Sequential& net, const Tensor& x, const std::vector<float>& coef,
                double analytic, double tol) {
    for (const float h : {1e-2f, 3e-3f, 3e-2f}) {
        const float orig = slot;
        slot = orig + h;
        const double lp = weighted_sum(net, x, coef);
        slot = orig - h;
        const double lm = weighted_sum(net, x, coef);
        slot = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
        if (std::abs(fd - analytic) / denom < tol) return true;
    }
    return false;
}

// Central-difference check of parameter gradients for an arbitrary stack.
void gradcheck_params(Sequential& net, const Tensor& x, double tol = 1e-3) {
    Rng rng(99);
    Tensor probe_out = net.forward(x, true);
    std::vector<float> coef(static_cast<size_t>(probe_out.numel()));
    for (auto& c : coef) c = static_cast<float>(rng.uniform(-1.0, 1.0));

    // analytic
    net.forward(x, true);
    net.zero_grads();
    Tensor dout(probe_out.shape);
    for (int64_t i = 0; i < dout.numel(); ++i) dout.data[static_cast<size_t>(i)] = coef[static_cast<size_t>(i)];
    net.backward(dout);

    std::vector<float> analytic;
    for (auto& p : net.params())
        for (int64_t i = 0; i < p.size; ++i) analytic.push_back(p.grad[i]);

    size_t k = 0;
    int checked = 0;
    for (auto& p : net.params()) {
        for (int64_t i = 0; i < p.size; ++i, ++k) {
            CHECK(fd_matches(p.value[i], net, x, coef, analytic[k], tol));
            ++checked;
        }
    }
    CHECK(checked > 0);
}

// Same but for the gradient w.r.t. the input.
void gradcheck_input(Sequential& net, Tensor x, double tol = 1e-3) {
    Rng rng(98);
    Tensor probe_out = net.forward(x, true);
    std::vector<float> coef(static_cast<size_t>(probe_out.numel()));
    for (auto& c : coef) c = static_cast<float>(rng.uniform(-1.0, 1.0));

    net.forward(x, true);
    net.zero_grads();
    Tensor dout(probe_out.shape);
    for (int64_t i = 0; i < dout.numel(); ++i) dout.data[static_cast<size_t>(i)] = coef[static_cast<size_t>(i)];
    Tensor dx = net.backward(dout);

    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(fd_matches(x.data[static_cast<size_t>(i)], net, x, coef, dx.data[static_cast<size_t>(i)], tol));
}

}  // namespace

TEST_CASE("conv2d parameter and input gradients") {
    Rng init(3);
    Sequential net;
    net.add(std::make_unique<Conv2d>(2, 3, 3, 1, 1, init));
    Rng rng(4);
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    gradcheck_params(net, x);
    gradcheck_input(net, x);
}

TEST_CASE("strided conv2d gradients") {
    Rng init(5);
    Sequential net;
    net.add(std::make_unique<Conv2d>(1, 2, 3, 2, 1, init));
    Rng rng(6);
    Tensor x = random_tensor({2, 1, 5, 5}, rng);
    gradcheck_params(net, x);
    gradcheck_input(net, x);
}

TEST_CASE("batchnorm gradients in training mode") {
    Sequential net;
    net.add(std::make_unique<BatchNorm2d>(2));
    // scale/shift away from the (1,0) init so gradients are nontrivial
    auto params = net.params();
    params[0].value[0] = 1.3f;
    params[0].value[1] = 0.7f;
    params[1].value[0] = -0.2f;
    params[1].value[1] = 0.4f;
    Rng rng(7);
    Tensor x = random_tensor({3, 2, 2, 2}, rng);
    gradcheck_params(net, x);
    gradcheck_input(net, x);
}

TEST_CASE("dense + activations gradients") {
    Rng init(8);
    Sequential net;
    net.add(std::make_unique<Flatten>());
    net.add(std::make_unique<Dense>(8, 5, init));
    net.add(std::make_unique<ReLU>());
    net.add(std::make_unique<Dense>(5, 3, init));
    net.add(std::make_unique<LeakyReLU>(0.2f));
    net.add(std::make_unique<Dense>(3, 2, init));
    net.add(std::make_unique<Sigmoid>());
    Rng rng(9);
    Tensor x = random_tensor({3, 2, 2, 2}, rng);
    gradcheck_params(net, x);
    gradcheck_input(net, x);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    BatchNorm2d bn(1);
    Rng rng(10);
    // accumulate running stats over a few training batches
    for (int i = 0; i < 50; ++i) {
        Tensor x = random_tensor({4, 1, 2, 2}, rng, 2.0, 4.0);
        bn.forward(x, true);
    }
    // eval output should normalize toward the population stats, and be
    // deterministic for repeated calls
    Tensor x = random_tensor({2, 1, 2, 2}, rng, 2.0, 4.0);
    Tensor y1 = bn.forward(x, false);
    Tensor y2 = bn.forward(x, false);
    for (int64_t i = 0; i < y1.numel(); ++i)
        CHECK(y1.data[static_cast<size_t>(i)] == y2.data[static_cast<size_t>(i)]);
    // population mean ~3 maps near 0
    double mean = 0.0;
    for (float v : y1.data) mean += v;
    mean /= static_cast<double>(y1.numel());
    CHECK(std::abs(mean) < 0.6);
}

TEST_CASE("optimizers descend a quadratic") {
    // minimize (w-3)^2 via both optimizers
    for (const bool use_adam : {true, false}) {
        std::vector<float> w{0.0f}, g{0.0f};
        std::vector<ParamView> params{{w.data(), g.data(), 1}};
        Adam adam(0.1);
        RmsProp rms(0.1);
        for (int i = 0; i < 300; ++i) {
            g[0] = 2.0f * (w[0] - 3.0f);
            if (use_adam)
                adam.step(params);
            else
                rms.step(params);
        }
        CHECK(std::abs(w[0] - 3.0f) < 0.1f);
    }
}

TEST_CASE("clip_params bounds every parameter") {
    Rng init(11);
    Sequential net;
    net.add(std::make_unique<Conv2d>(1, 4, 3, 1, 1, init));
    for (auto& p : net.params())
        for (int64_t i = 0; i < p.size; ++i) p.value[i] = static_cast<float>(i % 7) - 3.0f;
    net.clip_params(0.01f);
    for (auto& p : net.params())
        for (int64_t i = 0; i < p.size; ++i) CHECK(std::abs(p.value[i]) <= 0.01f);
}

TEST_CASE("optimizer state round-trips") {
    std::vector<float> w{1.0f, 2.0f}, g{0.3f, -0.2f};
    std::vector<ParamView> params{{w.data(), g.data(), 2}};
    Adam a(0.01);
    a.step(params);
    a.step(params);
    auto state = a.state();

    std::vector<float> w2 = w, g2 = g;
    std::vector<ParamView> params2{{w2.data(), g2.data(), 2}};
    Adam b(0.01);
    b.set_state(state);
    a.step(params);
    b.step(params2);
    CHECK(w[0] == w2[0]);
    CHECK(w[1] == w2[1]);
}
