#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "vital/grad_check.hpp"
#include "vital/latent_loop.hpp"
#include "vital/model.hpp"
#include "vital/vocab.hpp"

using namespace vital;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.values()) v = rng.normal(0.0, sd);
    return t;
}

ScaffoldConfig micro_scaffold() {
    ScaffoldConfig s;
    s.d_dec = 8;
    s.dec_layers = 1;
    s.dec_heads = 2;
    s.dec_ff = 8;
    s.d_v = 4;
    return s;
}

Tensor unit(std::size_t n, Rng& rng) { return kernels::l2_normalize(random_tensor(1, n, rng)); }

// Eq. 5 evaluated by hand on plain doubles.
std::vector<double> hand_vp(const Scaffolding& s, const std::vector<double>& z) {
    auto P = [&](const char* n) { return s.params().get(n).value(); };
    auto ln = [](std::vector<double> x, const Tensor& g, const Tensor& b) {
        double mu = 0, var = 0;
        for (double v : x) mu += v;
        mu /= x.size();
        for (double v : x) var += (v - mu) * (v - mu);
        var /= x.size();
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[i] + b[i];
        return x;
    };
    auto mv = [](const Tensor& W, const std::vector<double>& x) {
        std::vector<double> y(W.rows(), 0.0);
        for (std::size_t o = 0; o < W.rows(); ++o)
            for (std::size_t i = 0; i < W.cols(); ++i) y[o] += W.at(o, i) * x[i];
        return y;
    };
    auto zn = ln(z, P("scaffold.vp.ln_in.gain"), P("scaffold.vp.ln_in.bias"));
    auto h = mv(P("scaffold.vp.w1"), zn);
    for (std::size_t i = 0; i < h.size(); ++i)
        h[i] = 0.5 * h[i] * (1 + std::tanh(0.7978845608028654 * (h[i] + 0.044715 * h[i] * h[i] * h[i]))) + zn[i];
    return ln(mv(P("scaffold.vp.w2"), h), P("scaffold.vp.ln_out.gain"), P("scaffold.vp.ln_out.bias"));
}

}  // namespace

TEST_CASE("pj_in: zero weights and identity block") {
    Scaffolding s(micro_scaffold(), 12, Vocabulary::standard().size());
    Rng rng(1);
    Var z = Var::constant(random_tensor(1, 12, rng));
    Var w = s.params().get("scaffold.pj_in.weight"), b = s.params().get("scaffold.pj_in.bias");
    w.mutable_value().fill(0.0);
    const Tensor zeros_out = s.pj_in(z).value();
    for (double v : zeros_out.values()) CHECK(v == 0.0);
    for (std::size_t i = 0; i < 8; ++i) w.mutable_value().at(i, i) = 1.0;
    auto y = s.pj_in(z).value();
    for (std::size_t i = 0; i < 8; ++i) CHECK(y[i] == z.value()[i]);
    (void)b;
}

TEST_CASE("visual projector: zero input, determinism, hand composition, output norm") {
    Scaffolding s(micro_scaffold(), 8, Vocabulary::standard().size());
    const Tensor at_zero = s.visual_project(Var::constant(Tensor(1, 8)), RunMode{}).value();
    for (double v : at_zero.values()) CHECK(v == 0.0);
    Rng rng(2);
    Var z = Var::constant(random_tensor(1, 8, rng));
    auto a = s.visual_project(z, RunMode{}).value();
    CHECK(a == s.visual_project(z, RunMode{}).value());
    auto ref = hand_vp(s, std::vector<double>(z.value().values().begin(), z.value().values().end()));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a[i] - ref[i]) < 1e-10);
    // Output-norm property at the default dimensions.
    Scaffolding full(ScaffoldConfig{}, 64, 40);
    for (int t = 0; t < 50; ++t) {
        auto y = full.visual_project(Var::constant(random_tensor(1, 64, rng, 3.0)), RunMode{}).value();
        double mu = 0, var = 0;
        for (double v : y.values()) mu += v / 16;
        for (double v : y.values()) var += (v - mu) * (v - mu) / 16;
        CHECK(std::abs(mu) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
    Rng drop_rng(3);
    CHECK_NOTHROW(s.visual_project(z, RunMode{true, &drop_rng}));
}

TEST_CASE("projector variants all produce d_v outputs") {
    for (auto v : {ProjectorVariant::linear, ProjectorVariant::mlp, ProjectorVariant::mlp_ln,
                   ProjectorVariant::residual_mlp_ln}) {
        auto cfg = micro_scaffold();
        cfg.vp_variant = v;
        Scaffolding s(cfg, 8, 40);
        CHECK(s.visual_project(Var::constant(Tensor(1, 8, 0.5)), RunMode{}).cols() == 4);
        CHECK(projector_variant_from_string(to_string(v)) == v);
    }
    CHECK_THROWS_AS(projector_variant_from_string("transformer"), ConfigError);
}

TEST_CASE("semantic loss: alignment, K=1, gradient reaches z and decoder") {
    const auto V = Vocabulary::standard().size();
    Scaffolding s(micro_scaffold(), 8, V);
    Rng rng(4);
    LatentTrace tr;
    tr.states = {Var::leaf(random_tensor(1, 8, rng), true), Var::leaf(random_tensor(1, 8, rng), true)};
    ReasoningChain chain{{{10, 11, 12}, {13, 14}}};
    Var loss = s.semantic_loss(tr, chain, RunMode{});
    CHECK(std::isfinite(loss.value().item()));

    LatentTrace one{{tr.states[0]}, false};
    ReasoningChain c1{{chain.steps[0]}};
    Var l1 = s.semantic_loss(one, c1, RunMode{});
    LatentTrace second{{tr.states[1]}, false};
    Var l2 = s.semantic_loss(second, ReasoningChain{{chain.steps[1]}}, RunMode{});
    CHECK(loss.value().item() == doctest::Approx((l1.value().item() + l2.value().item()) / 2).epsilon(1e-14));

    CHECK_THROWS_AS(s.semantic_loss(one, chain, RunMode{}), DataError);
    CHECK_THROWS_AS(s.semantic_loss(LatentTrace{}, ReasoningChain{}, RunMode{}), EmptyLossError);

    std::vector<Var> params{tr.states[0], tr.states[1]};
    for (const auto& [n, v] : s.params().all()) params.push_back(v);
    GradCheckOptions o;
    o.max_entries_per_param = 6;
    auto rep = grad_check([&] { return s.semantic_loss(tr, chain, RunMode{}); }, params, o);
    CHECK(rep.max_rel_error < 1e-6);
    backward(s.semantic_loss(tr, chain, RunMode{}));
    double gz = 0.0;
    for (double g : tr.states[0].grad().values()) gz += std::abs(g);
    CHECK(gz > 0.0);
}

TEST_CASE("semantic loss below uniform when the decoder is built to predict the chain") {
    const auto V = Vocabulary::standard().size();
    auto cfg = micro_scaffold();
    Scaffolding s(cfg, 8, V);
    // Zero every decoder block so each hidden state is the final norm of its own
    // input. With zero-mean orthogonal patterns u, w: pj_in emits w, token t
    // embeds as 5(u + w) and <eos> as 20u, so position 0 favors t and the t
    // position favors <eos>.
    for (const auto& [n, v] : s.params().all()) {
        Var h = v;
        if (n.find("scaffold.decoder.layers") == 0 && n.find("gain") == std::string::npos) h.mutable_value().fill(0.0);
    }
    const double u[8] = {1, -1, 1, -1, 1, -1, 1, -1}, w[8] = {1, 1, -1, -1, 1, 1, -1, -1};
    const int t = 20;
    Var emb = s.params().get("scaffold.decoder.tok_embed");
    emb.mutable_value().fill(0.0);
    Var pw = s.params().get("scaffold.pj_in.weight"), pb = s.params().get("scaffold.pj_in.bias");
    pw.mutable_value().fill(0.0);
    for (std::size_t i = 0; i < 8; ++i) {
        emb.mutable_value().at(t, i) = 5.0 * (u[i] + w[i]) / std::sqrt(8.0);
        emb.mutable_value().at(Vocabulary::kEos, i) = 20.0 * u[i] / std::sqrt(8.0);
        pb.mutable_value()[i] = w[i];
    }
    LatentTrace tr{{Var::constant(Tensor(1, 8, 0.1))}, false};
    ReasoningChain chain{{{t}}};
    const double loss = s.semantic_loss(tr, chain, RunMode{}).value().item();
    CHECK(loss < std::log(static_cast<double>(V)));
    CHECK(loss < 1e-3);
}

TEST_CASE("visual loss: zero at target, per-step alphas, hand average, norm check") {
    auto alphas = per_step_alphas(4);
    CHECK(alphas == std::vector<double>{0.0, 0.33, 0.67, 1.0});
    CHECK(per_step_alphas(1) == std::vector<double>{1.0});

    Scaffolding s(micro_scaffold(), 8, 40);
    Rng rng(9);
    LatentTrace tr{{Var::constant(random_tensor(1, 8, rng)), Var::constant(random_tensor(1, 8, rng))}, false};
    Tensor f = unit(4, rng), g = unit(4, rng);
    auto vp0 = s.visual_project(tr.states[0], RunMode{}).value();
    auto vp1 = s.visual_project(tr.states[1], RunMode{}).value();
    double hand = 0.0;
    for (std::size_t i = 0; i < 4; ++i) hand += (std::abs(vp0[i] - f[i]) + std::abs(vp1[i] - f[i])) / 4.0;
    hand /= 2.0;
    CHECK(std::abs(s.visual_loss(tr, f, VisualTargetMode::shared, nullptr, RunMode{}).value().item() - hand) < 1e-12);

    // Linear projector with W_2 chosen so VP(z) == f exactly.
    auto lc = micro_scaffold();
    lc.vp_variant = ProjectorVariant::linear;
    Scaffolding lin(lc, 4, 40);
    Var w2 = lin.params().get("scaffold.vp.w2");
    w2.mutable_value().fill(0.0);
    for (std::size_t i = 0; i < 4; ++i) w2.mutable_value().at(i, i) = 1.0;
    LatentTrace same{{Var::constant(f), Var::constant(f)}, false};
    CHECK(lin.visual_loss(same, f, VisualTargetMode::shared, nullptr, RunMode{}).value().item() == doctest::Approx(0.0));

    // Per-step, K=4 with VP = identity and every z = g: the step-1 target is
    // f_global itself, so only steps 2..4 contribute.
    LatentTrace four{{Var::constant(g), Var::constant(g), Var::constant(g), Var::constant(g)}, false};
    double expect = 0.0;
    for (double a : {0.0, 0.33, 0.67, 1.0}) {
        Tensor mix(1, 4);
        double n = 0.0;
        for (std::size_t i = 0; i < 4; ++i) n += std::pow(a * f[i] + (1 - a) * g[i], 2);
        for (std::size_t i = 0; i < 4; ++i) mix[i] = (a * f[i] + (1 - a) * g[i]) / std::sqrt(n);
        double l = 0.0;
        for (std::size_t i = 0; i < 4; ++i) l += std::abs(g[i] - mix[i]) / 4.0;
        if (a == 0.0) CHECK(l < 1e-15);
        expect += l / 4.0;
    }
    CHECK(std::abs(lin.visual_loss(four, f, VisualTargetMode::per_step, &g, RunMode{}).value().item() - expect) < 1e-12);

    Tensor not_unit = f;
    not_unit[0] += 0.01;
    CHECK_THROWS_AS(s.visual_loss(tr, not_unit, VisualTargetMode::shared, nullptr, RunMode{}), DataError);
    CHECK_THROWS_AS(s.visual_loss(tr, f, VisualTargetMode::per_step, nullptr, RunMode{}), ArgumentError);
}
