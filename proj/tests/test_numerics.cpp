#include <cmath>
#include <numeric>
#include <cstdlib>

#include "doctest.h"
#include "vital/grad_check.hpp"
#include "vital/ops.hpp"
#include "vital/optim.hpp"
#include "vital/rng.hpp"

using namespace vital;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.values()) v = rng.normal(0.0, sd);
    return t;
}

}  // namespace

TEST_CASE("layer_norm edge cases and two-pass reference") {
    Tensor ones(1, 4, 1.0), zeros(1, 4, 0.0);
    auto y = kernels::layer_norm(Tensor(1, 4, 3.5), ones, zeros);
    for (double v : y.values()) CHECK(v == 0.0);

    auto y2 = kernels::layer_norm(Tensor::vector({1.0, -1.0}), Tensor(1, 2, 1.0), Tensor(1, 2), 1e-300);
    CHECK(y2[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y2[1] == doctest::Approx(-1.0).epsilon(1e-12));

    Rng rng(7);
    Tensor x = random_tensor(1, 8, rng), g = random_tensor(1, 8, rng), b = random_tensor(1, 8, rng);
    auto out = kernels::layer_norm(x, g, b);
    double mean = 0.0;
    for (double v : x.values()) mean += v;
    mean /= 8.0;
    double var = 0.0;
    for (double v : x.values()) var += (v - mean) * (v - mean);
    var /= 8.0;
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(std::abs(out[i] - (g[i] * (x[i] - mean) / std::sqrt(var + 1e-5) + b[i])) < 1e-12);

    CHECK_THROWS_AS(kernels::layer_norm(x, Tensor(1, 3, 1.0), b), ShapeError);
}

TEST_CASE("gelu values") {
    CHECK(kernels::gelu(0.0) == 0.0);
    CHECK(std::abs(kernels::gelu(10.0) - 10.0) < 1e-4);
    CHECK(std::abs(kernels::gelu(-10.0)) < 1e-4);
    // tanh form at x = 1: 0.5 (1 + tanh(sqrt(2/pi) * 1.044715))
    CHECK(kernels::gelu(1.0) == doctest::Approx(0.8411919906082768).epsilon(1e-14));
}

TEST_CASE("l2_normalize") {
    auto u = kernels::l2_normalize(Tensor::vector({3.0, 4.0}));
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    auto again = kernels::l2_normalize(u);
    CHECK(std::abs(again[0] - u[0]) < 1e-15);
    CHECK_THROWS_AS(kernels::l2_normalize(Tensor(1, 3)), DegenerateVectorError);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        auto v = kernels::l2_normalize(random_tensor(1, 1 + rng.below(20), rng, std::pow(10.0, rng.uniform(-5, 5))));
        CHECK(std::abs(l2_norm(v.values()) - 1.0) <= 1e-9);
    }
}

TEST_CASE("cross_entropy values and masking") {
    Tensor margin(1, 5, 0.0);
    margin[2] = 20.0;
    std::vector<int> tgt{2};
    std::vector<char> m1{1};
    CHECK(kernels::cross_entropy(margin, tgt, m1) < 1e-3);
    CHECK(kernels::cross_entropy(Tensor(1, 7, 0.3), tgt, m1) == doctest::Approx(std::log(7.0)).epsilon(1e-14));

    Rng rng(11);
    Tensor logits = random_tensor(3, 5, rng, 2.0);
    std::vector<int> targets{4, 0, 2};
    std::vector<char> mask{1, 0, 1};
    double ref = 0.0;
    for (std::size_t t : {0u, 2u}) {
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits.at(t, j));
        ref += -std::log(std::exp(logits.at(t, static_cast<std::size_t>(targets[t]))) / z);
    }
    CHECK(std::abs(kernels::cross_entropy(logits, targets, mask) - ref / 2.0) < 1e-10);

    Var L = Var::leaf(logits, true);
    backward(ops::cross_entropy(L, targets, mask));
    for (std::size_t j = 0; j < 5; ++j) CHECK(L.grad().at(1, j) == 0.0);

    std::vector<char> none{0, 0, 0};
    CHECK_THROWS_AS(kernels::cross_entropy(logits, targets, none), EmptyLossError);
}

TEST_CASE("l1_loss") {
    Tensor a = Tensor::vector({1.0, 1.0});
    CHECK(kernels::l1_loss(a, a) == 0.0);
    CHECK(kernels::l1_loss(a, Tensor(1, 2)) == 1.0);
    Rng rng(5);
    Tensor p = random_tensor(1, 16, rng), q = random_tensor(1, 16, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i) s += std::fabs(p[i] - q[i]);
    CHECK(std::abs(kernels::l1_loss(p, q) - s / 16.0) < 1e-12);
    CHECK_THROWS_AS(kernels::l1_loss(p, Tensor(1, 3)), ShapeError);
}

TEST_CASE("grad_check on a quadratic and on every op") {
    Rng rng(21);
    Var w = Var::leaf(random_tensor(1, 6, rng), true);
    auto rep = grad_check([&] { return ops::sum(std::vector<Var>{ops::linear(w, w)}); }, {w});
    CHECK(rep.passed);
    CHECK(rep.max_rel_error < 1e-8);

    // Randomized shapes through a composition of every differentiable kernel.
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t heads = 2, hd = 2 * (1 + rng.below(2)), d = heads * hd, T = 2 + rng.below(3);
        Var x = Var::leaf(random_tensor(T, d, rng), true);
        Var W = Var::leaf(random_tensor(d, d, rng, 0.5), true);
        Var g = Var::leaf(random_tensor(1, d, rng), true);
        Var b = Var::leaf(random_tensor(1, d, rng), true);
        Var table = Var::leaf(random_tensor(5, d, rng), true);
        Var frozen = Var::leaf(random_tensor(1, d, rng), false);
        Tensor target = random_tensor(1, d, rng);
        std::vector<int> ids{1, 3};
        auto loss = [&] {
            Var e = ops::embedding(table, ids);
            Var h = ops::concat_rows(std::vector<Var>{ops::add_row(x, frozen), e});
            Var n = ops::layer_norm(h, g, b);
            Var q = ops::rope(ops::linear(n, W), heads, 3);
            Var k = ops::rope(n, heads, 3);
            Var a0 = ops::attention(ops::slice_rows(q, 0, 1), std::vector<Var>{ops::slice_rows(k, 0, 1)},
                                    std::vector<Var>{ops::slice_rows(n, 0, 1)}, heads, 0);
            Var att = ops::attention(q, std::vector<Var>{k}, std::vector<Var>{ops::gelu(n)}, heads, 0);
            Var logits = ops::linear(att, table);
            std::vector<int> tg(att.rows(), 2);
            std::vector<char> mask(att.rows(), 1);
            mask[0] = 0;
            return ops::sum(std::vector<Var>{ops::cross_entropy(logits, tg, mask),
                                             ops::scale(ops::l1_loss(ops::slice_rows(att, 1, 1), target), 0.5),
                                             ops::l1_loss(a0, target)});
        };
        GradCheckOptions gco;
        if (const char* e = std::getenv("GC_STEP")) gco.step = std::atof(e);
        auto r = grad_check(loss, {x, W, g, b, table, frozen}, gco);
        CHECK(r.frozen_violations == 0);
        INFO("param " << r.worst_param << " entry " << r.worst_entry);
        CHECK(r.max_rel_error < 1e-6);
    }
}

TEST_CASE("32-bit mode gradients within 1e-3") {
    PrecisionScope p32(Precision::f32);
    Rng rng(8);
    Var x = Var::leaf(random_tensor(3, 4, rng), true);
    Var g = Var::leaf(random_tensor(1, 4, rng), true);
    Var b = Var::leaf(random_tensor(1, 4, rng), true);
    auto loss = [&] { return ops::l1_loss(ops::slice_rows(ops::gelu(ops::layer_norm(x, g, b)), 1, 1), Tensor(1, 4, 0.1)); };
    GradCheckOptions o;
    o.step = 1e-2;
    o.tolerance = 1e-3;
    o.abs_floor = 1e-2;
    CHECK(grad_check(loss, {x, g, b}, o).max_rel_error < 1e-3);
}

TEST_CASE("kernels are deterministic") {
    Rng rng(2);
    Tensor x = random_tensor(4, 8, rng);
    auto a = kernels::layer_norm(kernels::gelu(x), Tensor(1, 8, 1.0), Tensor(1, 8));
    auto b = kernels::layer_norm(kernels::gelu(x), Tensor(1, 8, 1.0), Tensor(1, 8));
    CHECK(a == b);
}

TEST_CASE("AdamW: zero grad, clipping, hand recurrence") {
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.warmup_ratio = 0.0;
    cfg.total_steps = 10;
    std::vector<Var> p{Var::leaf(Tensor::vector({0.5, -2.0}), true)};
    AdamW opt(cfg, p);
    p[0].node()->grad = Tensor(1, 2);
    opt.step(p);
    CHECK(p[0].value() == Tensor::vector({0.5, -2.0}));

    // Norm-10 gradient under clip 1.0: moments see the gradient scaled by 0.1.
    std::vector<Var> q{Var::leaf(Tensor::vector({0.0, 0.0}), true)};
    AdamW o2(cfg, q);
    q[0].node()->grad = Tensor::vector({6.0, 8.0});
    CHECK(o2.step(q) == doctest::Approx(10.0));
    q[0].node()->grad = Tensor::vector({0.3, 0.4});
    CHECK(o2.step(q) == doctest::Approx(0.5));
    {
        double w0 = 0.0, m0 = 0.0, v0 = 0.0;
        for (int t = 1; t <= 2; ++t) {
            const double g = t == 1 ? 0.6 : 0.3;  // first entry after clipping
            m0 = 0.9 * m0 + 0.1 * g;
            v0 = 0.999 * v0 + 0.001 * g * g;
            w0 -= 1e-3 * (m0 / (1 - std::pow(0.9, t))) / (std::sqrt(v0 / (1 - std::pow(0.999, t))) + 1e-8);
        }
        CHECK(std::abs(q[0].value()[0] - w0) < 1e-12);
    }

    // Scalar hand recurrence, with weight decay and warmup.
    AdamWConfig c3;
    c3.lr = 0.1;
    c3.weight_decay = 0.01;
    c3.max_grad_norm = 0.0;
    c3.warmup_ratio = 0.5;
    c3.total_steps = 4;
    std::vector<Var> s{Var::leaf(Tensor::scalar(1.0), true)};
    AdamW o3(c3, s);
    double w = 1.0, m = 0.0, v = 0.0;
    const double grads[3] = {0.3, -0.7, 1.1};
    for (int t = 1; t <= 3; ++t) {
        s[0].node()->grad = Tensor::scalar(grads[t - 1]);
        o3.step(s);
        const double lr = t <= 2 ? 0.1 * t / 2.0 : 0.1;
        w *= 1.0 - lr * 0.01;
        m = 0.9 * m + 0.1 * grads[t - 1];
        v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
        const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
        w -= lr * mh / (std::sqrt(vh) + 1e-8);
        CHECK(std::abs(s[0].value().item() - w) < 1e-10);
    }

    s[0].node()->grad = Tensor::scalar(std::nan(""));
    CHECK_THROWS_AS(o3.step(s), NumericalError);
}
