#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairprior/objectives.hpp"
#include "fairprior/rng.hpp"

using namespace fairprior;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Central finite differences on a scalar functional of one tensor.
template <typename F>
void check_gradient(Tensor& x, F loss_of_x, const Tensor& analytic_grad, double tol = 1e-3) {
    const float h = 1e-3f;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float orig = x.data[static_cast<size_t>(i)];
        x.data[static_cast<size_t>(i)] = orig + h;
        const double lp = loss_of_x(x);
        x.data[static_cast<size_t>(i)] = orig - h;
        const double lm = loss_of_x(x);
        x.data[static_cast<size_t>(i)] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = analytic_grad.data[static_cast<size_t>(i)];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
        CHECK(std::abs(fd - an) / denom < tol);
    }
}

}  // namespace

TEST_CASE("prior_loss hand values") {
    std::vector<float> p1{1.0f, 1.0f}, e1{1.0f, 1.0f};
    CHECK(prior_loss(p1, e1) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<float> p2{2.0f, 4.0f}, e2{1.0f, 1.0f};
    CHECK(prior_loss(p2, e2) == doctest::Approx(2.0).epsilon(1e-12));

    std::vector<float> p3{0.0f}, e3{5.0f};
    CHECK(prior_loss(p3, e3) == doctest::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("prior_loss errors") {
    std::vector<float> empty, some{1.0f};
    CHECK_THROWS_AS(prior_loss(empty, some), InputError);
    CHECK_THROWS_AS(prior_loss(some, empty), InputError);
    std::vector<float> nan{std::nanf("")};
    CHECK_THROWS_AS(prior_loss(nan, some), NumericError);
}

TEST_CASE("prior_loss antisymmetry and permutation invariance") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int na = 1 + static_cast<int>(rng.below(8));
        const int nb = 1 + static_cast<int>(rng.below(8));
        std::vector<float> a(static_cast<size_t>(na)), b(static_cast<size_t>(nb));
        for (auto& v : a) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        for (auto& v : b) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        const double l = prior_loss(a, b);
        CHECK(prior_loss(b, a) == doctest::Approx(-l).epsilon(1e-9));

        std::vector<float> ap = a, bp = b;
        rng.shuffle(ap.begin(), ap.end());
        rng.shuffle(bp.begin(), bp.end());
        CHECK(prior_loss(ap, bp) == doctest::Approx(l).epsilon(1e-9));
    }
}

TEST_CASE("diversity_loss hand values") {
    // identical encodings for all inputs -> 0 (the mode-collapse case)
    Tensor x({3, 2}, {0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 1.0f});
    Tensor f_same({3, 2}, {0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f});
    CHECK(diversity_loss(x, f_same) == doctest::Approx(0.0).epsilon(1e-12));

    // identity encoder -> ratio of equal norms = 1 (up to eps-induced error)
    CHECK(diversity_loss(x, x) == doctest::Approx(1.0).epsilon(1e-6));

    // one pair with ||u-v||=2 and ||f(u)-f(v)||=1 -> 0.5
    Tensor u({2, 1}, {0.0f, 2.0f});
    Tensor fu({2, 1}, {0.0f, 1.0f});
    CHECK(diversity_loss(u, fu) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("diversity_loss edge cases") {
    Tensor single({1, 2}, {1.0f, 2.0f});
    CHECK_THROWS_AS(diversity_loss(single, single), InputError);

    // identical-input pairs are excluded; remaining pairs still counted
    Tensor x({3, 1}, {1.0f, 1.0f, 2.0f});
    Tensor f({3, 1}, {0.0f, 0.0f, 1.0f});
    // pairs: (0,1) skipped, (0,2) ratio 1, (1,2) ratio 1
    CHECK(diversity_loss(x, f) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("diversity_loss nonnegative, zero iff collapsed") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(6));
        Tensor x = random_tensor({n, 5}, rng);
        Tensor f = random_tensor({n, 5}, rng);
        const double v = diversity_loss(x, f);
        CHECK(v >= 0.0);
    }
}

TEST_CASE("diversity_loss invariant under orthogonal transform") {
    // a reflection applied to both inputs and encodings preserves all norms
    Rng rng(13);
    const int n = 5, d = 4;
    Tensor x = random_tensor({n, d}, rng);
    Tensor f = random_tensor({n, d}, rng);

    // Householder reflection H = I - 2vv^T with unit v
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto& vi : v) {
        vi = rng.uniform(-1.0, 1.0);
        norm += vi * vi;
    }
    norm = std::sqrt(norm);
    for (auto& vi : v) vi /= norm;

    auto reflect = [&](const Tensor& t) {
        Tensor out(t.shape);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += v[static_cast<size_t>(k)] * t.data[static_cast<size_t>(i * d + k)];
            for (int k = 0; k < d; ++k)
                out.data[static_cast<size_t>(i * d + k)] =
                    static_cast<float>(t.data[static_cast<size_t>(i * d + k)] - 2.0 * dot * v[static_cast<size_t>(k)]);
        }
        return out;
    };

    const double before = diversity_loss(x, f);
    const double after = diversity_loss(reflect(x), reflect(f));
    CHECK(after == doctest::Approx(before).epsilon(1e-4));
}

TEST_CASE("classification_loss hand values") {
    // uniform logits over 2 classes -> ln 2
    Tensor l2({2, 2}, {0.3f, 0.3f, -1.0f, -1.0f});
    std::vector<int> y2{0, 1};
    CHECK(classification_loss(l2, y2) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // uniform logits over 3 classes -> ln 3
    Tensor l3({1, 3}, {0.0f, 0.0f, 0.0f});
    std::vector<int> y3{2};
    CHECK(classification_loss(l3, y3) == doctest::Approx(std::log(3.0)).epsilon(1e-9));

    // confidently correct -> toward 0
    Tensor lc({1, 2}, {30.0f, -30.0f});
    std::vector<int> yc{0};
    CHECK(classification_loss(lc, yc) < 1e-9);
}

TEST_CASE("classification_loss label validation") {
    Tensor l({1, 2}, {0.0f, 0.0f});
    std::vector<int> bad{2};
    CHECK_THROWS_AS(classification_loss(l, bad), InputError);
    std::vector<int> neg{-1};
    CHECK_THROWS_AS(classification_loss(l, neg), InputError);
}

TEST_CASE("adversary_loss hand values") {
    // uniform over 2 groups -> 0.5
    Tensor u({4, 2}, {0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f, 0.0f});
    std::vector<int> a{0, 1, 0, 1};
    CHECK(adversary_loss(u, a, 2) == doctest::Approx(0.5).epsilon(1e-9));

    // perfectly confident and correct -> 1; confident and wrong -> 0
    Tensor conf({2, 2}, {40.0f, -40.0f, -40.0f, 40.0f});
    std::vector<int> right{0, 1}, wrong{1, 0};
    CHECK(adversary_loss(conf, right, 2) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(adversary_loss(conf, wrong, 2) == doctest::Approx(0.0).epsilon(1e-9));

    // group 0: two samples at p(a)=0.6, group 1: one sample at p(a)=0.8
    // group-normalized mean = (0.6 + 0.8) / 2 = 0.7
    const float l06 = static_cast<float>(std::log(0.6 / 0.4));
    const float l08 = static_cast<float>(std::log(0.8 / 0.2));
    Tensor mixed({3, 2}, {l06, 0.0f, l06, 0.0f, 0.0f, l08});
    std::vector<int> groups{0, 0, 1};
    CHECK(adversary_loss(mixed, groups, 2) == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("adversary_loss uniform gives 1/group_count") {
    for (int g = 2; g <= 6; ++g) {
        const int n = 2 * g;
        Tensor logits({n, g});
        std::vector<int> a(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)] = i % g;
        // exact up to float32 storage of the softmax probabilities
        CHECK(adversary_loss(logits, a, g) == doctest::Approx(1.0 / g).epsilon(1e-7));
    }
}

TEST_CASE("adversary_loss stays in (0,1) and validates ids") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int g = 2 + static_cast<int>(rng.below(5));
        const int n = g + static_cast<int>(rng.below(10));
        Tensor logits = random_tensor({n, g}, rng, -4.0, 4.0);
        std::vector<int> a(static_cast<size_t>(n));
        for (auto& v : a) v = static_cast<int>(rng.below(static_cast<uint64_t>(g)));
        const double val = adversary_loss(logits, a, g);
        CHECK(val > 0.0);
        CHECK(val < 1.0);
    }
    Tensor logits({1, 2});
    std::vector<int> bad{2};
    CHECK_THROWS_AS(adversary_loss(logits, bad, 2), InputError);
}

TEST_CASE("stage totals") {
    LossWeights w;
    w.lambda_div = 0.0;
    CHECK(stage1_total(3.25, 17.0, w) == doctest::Approx(3.25));
    w.lambda_div = 0.5;
    CHECK(stage1_total(2.0, 1.0, w) == doctest::Approx(1.5));
    w.lambda_div = 1.0;
    CHECK(stage1_total(0.0, 1.0, w) == doctest::Approx(-1.0));

    LossWeights w2;
    w2.alpha_clf = 1.0;
    w2.beta_adv = 1.0;
    w2.gamma_prior = 1.0;
    CHECK(stage2_total(0.7, 0.5, 0.0, w2) == doctest::Approx(1.2));

    // beta = gamma = 0 reduces to pure classification training
    w2.beta_adv = 0.0;
    w2.gamma_prior = 0.0;
    w2.alpha_clf = 2.0;
    CHECK(stage2_total(0.3, 123.0, 456.0, w2) == doctest::Approx(0.6));

    LossWeights bad;
    bad.lambda_div = -1.0;
    CHECK_THROWS_AS(stage1_total(0.0, 0.0, bad), InputError);
}

TEST_CASE("diversity_loss gradient matches finite differences") {
    Rng rng(21);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor f = random_tensor({4, 6}, rng);
    Tensor grad(f.shape);
    diversity_loss_backward(x, f, 1.0, grad);
    check_gradient(
        f, [&](const Tensor& ft) { return diversity_loss(x, ft); }, grad);
}

TEST_CASE("classification_loss gradient matches finite differences") {
    Rng rng(22);
    Tensor logits = random_tensor({5, 3}, rng, -2.0, 2.0);
    std::vector<int> labels{0, 2, 1, 1, 0};
    Tensor grad(logits.shape);
    classification_loss_backward(logits, labels, 1.0, grad);
    check_gradient(
        logits, [&](const Tensor& lt) { return classification_loss(lt, labels); }, grad);
}

TEST_CASE("adversary_loss gradient matches finite differences") {
    Rng rng(23);
    Tensor logits = random_tensor({6, 3}, rng, -2.0, 2.0);
    std::vector<int> groups{0, 1, 2, 0, 1, 2};
    Tensor grad(logits.shape);
    adversary_loss_backward(logits, groups, 3, 1.0, grad);
    check_gradient(
        logits, [&](const Tensor& lt) { return adversary_loss(lt, groups, 3); }, grad);
}
