#include <cmath>

#include "doctest.h"
#include "vital/reference_forward.hpp"
#include "vital/backbone.hpp"
#include "vital/latent_loop.hpp"
#include "vital/vocab.hpp"

using namespace vital;
using vital::reference::max_abs_diff;
using vital::reference::Mat;

namespace {

BackboneConfig small_config() {
    BackboneConfig c;
    c.d = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 24;
    c.image_size = 8;
    c.patch_grid = 2;
    c.lora_rank = 2;
    c.lora_alpha = 4;
    c.max_positions = 32;
    return c;
}

ToyImage random_image(std::size_t g, Rng& rng) {
    ToyImage img(g);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

std::vector<int> random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
    std::vector<int> t(n);
    for (auto& v : t) v = static_cast<int>(4 + rng.below(vocab - 4));
    return t;
}

// Non-zero adapters so the oracle exercises the low-rank path too.
void randomize_adapters(Backbone& bb, Rng& rng) {
    for (auto& [name, v] : bb.params().all())
        if (ParamStore::namespace_of(name) == "lora") {
            Var h = v;
            for (auto& x : h.mutable_value().values()) x = rng.normal(0.0, 0.2);
        }
}

Mat rows_of(const Tensor& t) { return vital::reference::to_mat(t); }

}  // namespace

TEST_CASE("cache equivalence against the cache-free oracle") {
    Rng rng(99);
    for (Precision prec : {Precision::f64, Precision::f32}) {
        PrecisionScope scope(prec);
        const double tol = prec == Precision::f64 ? 1e-10 : 1e-5;
        Backbone bb(small_config());
        randomize_adapters(bb, rng);
        for (int trial = 0; trial < 5; ++trial) {
            auto img = random_image(8, rng);
            auto q = random_tokens(3 + rng.below(4), bb.config().vocab_size, rng);
            auto enc = bb.encode_prefix(img, q, RunMode{});
            auto [trace, cache] = latent_loop(bb, enc, 3, RunMode{});
            // Full input sequence: visual tokens, question embeddings, then z_0..z_2 fed back.
            Mat x = rows_of(bb.visual_tokens(img).value());
            for (auto r : rows_of(bb.embed(q).value())) x.push_back(r);
            x.push_back(rows_of(enc.z0.value())[0]);
            for (int k = 0; k < 2; ++k) x.push_back(rows_of(trace.states[k].value())[0]);
            Mat ref = vital::reference::reference_stack(bb, x);
            for (std::size_t t = 0; t < enc.hidden.rows(); ++t)
                CHECK(max_abs_diff(ref[t], enc.hidden.value().row(t)) < tol);
            for (std::size_t k = 0; k < 3; ++k)
                CHECK(max_abs_diff(ref[enc.hidden.rows() + k], trace.states[k].value().values()) < tol);
        }
    }
}

TEST_CASE("encode_prefix determinism, causality and overflow") {
    Backbone bb(small_config());
    ToyImage blank(8, 0.0);
    std::vector<int> none;
    auto a = bb.encode_prefix(blank, none, RunMode{});
    auto b = bb.encode_prefix(blank, none, RunMode{});
    CHECK(a.z0.value() == b.z0.value());
    CHECK(a.hidden.rows() == bb.config().visual_tokens());

    Rng rng(4);
    auto img = random_image(8, rng);
    std::vector<int> q{10, 11, 12};
    std::vector<int> q_longer{10, 11, 12, 13, 14};
    auto e1 = bb.encode_prefix(img, q, RunMode{});
    auto e2 = bb.encode_prefix(img, q_longer, RunMode{});
    for (std::size_t t = 0; t < e1.hidden.rows(); ++t)
        CHECK(max_abs_diff(std::vector<double>(e1.hidden.value().row(t).begin(), e1.hidden.value().row(t).end()),
                           e2.hidden.value().row(t)) == 0.0);
    for (std::size_t l = 0; l < bb.config().n_layers; ++l)
        CHECK(e1.cache.keys(l)[0].value().row(0)[0] == e2.cache.keys(l)[0].value().row(0)[0]);

    std::vector<int> too_long(bb.config().max_positions, 5);
    CHECK_THROWS_AS(bb.encode_prefix(img, too_long, RunMode{}), LengthError);
}

TEST_CASE("forward_step: cache growth, order sensitivity, overflow") {
    Backbone bb(small_config());
    Rng rng(5);
    auto img = random_image(8, rng);
    std::vector<int> q{7, 8};
    auto enc = bb.encode_prefix(img, q, RunMode{});
    Var u = Var::constant(Tensor(1, 16, 0.3)), v = Var::constant(Tensor(1, 16, -0.2));
    v.mutable_value()[0] = 1.0;
    KVCache c1 = enc.cache, c2 = enc.cache;
    bb.forward_step(u, c1, RunMode{});
    Var h1 = bb.forward_step(v, c1, RunMode{});
    bb.forward_step(v, c2, RunMode{});
    Var h2 = bb.forward_step(u, c2, RunMode{});
    CHECK(c1.length() == enc.cache.length() + 2);
    CHECK_FALSE(h1.value() == h2.value());

    KVCache full = bb.new_cache();
    while (full.length() < bb.config().max_positions) bb.forward_step(u, full, RunMode{});
    CHECK_THROWS_AS(bb.forward_step(u, full, RunMode{}), LengthError);

    Var bad = Var::constant(Tensor(1, 16, std::nan("")));
    KVCache c3 = enc.cache;
    CHECK_THROWS_AS(bb.forward_step(bad, c3, RunMode{}), NumericalError);
}

TEST_CASE("zero adapters reproduce the frozen backbone exactly") {
    Backbone bb(small_config());
    Rng rng(6);
    auto img = random_image(8, rng);
    std::vector<int> q{9, 10, 11};
    auto before = bb.encode_prefix(img, q, RunMode{});
    randomize_adapters(bb, rng);
    auto changed = bb.encode_prefix(img, q, RunMode{});
    CHECK_FALSE(changed.z0.value() == before.z0.value());
    for (auto& [name, v] : bb.params().all())
        if (name.size() > 2 && name.substr(name.size() - 2) == ".B") {
            Var h = v;
            h.mutable_value().fill(0.0);
        }
    auto after = bb.encode_prefix(img, q, RunMode{});
    CHECK(after.z0.value() == before.z0.value());
}

TEST_CASE("lora_apply: zero B, rank-1 hand computation, eval determinism") {
    Rng rng(8);
    Tensor Wt(3, 2);
    for (auto& x : Wt.values()) x = rng.normal();
    Var W = Var::constant(Wt);
    Var x = Var::constant(Tensor::vector({0.7, -1.3}));
    LoraAdapter ad{Var::constant(Tensor(1, 2, 0.5)), Var::constant(Tensor(3, 1, 0.0)), 1.0, 0.0};
    CHECK(lora_apply(&ad, W, x, RunMode{}).value() == ops::linear(x, W).value());

    // r = 1, A = e_1ᵀ, B = e_2, alpha = r: y = Wx + e_2 * x_1.
    LoraAdapter r1{Var::constant(Tensor::vector({1.0, 0.0})), Var::constant(Tensor(3, 1, 0.0)), 1.0, 0.0};
    r1.b.mutable_value()[1] = 1.0;
    auto y = lora_apply(&r1, W, x, RunMode{}).value();
    for (std::size_t o = 0; o < 3; ++o) {
        double expect = Wt.at(o, 0) * 0.7 + Wt.at(o, 1) * -1.3 + (o == 1 ? 0.7 : 0.0);
        CHECK(y[o] == doctest::Approx(expect).epsilon(1e-14));
    }

    LoraAdapter drop = r1;
    drop.dropout = 0.5;
    CHECK(lora_apply(&drop, W, x, RunMode{}).value() == lora_apply(&drop, W, x, RunMode{}).value());
    CHECK_THROWS_AS(lora_apply(&drop, W, x, RunMode{true, nullptr}), ArgumentError);

    LoraAdapter wrong{Var::constant(Tensor(1, 5)), Var::constant(Tensor(3, 1)), 1.0, 0.0};
    CHECK_THROWS_AS(lora_apply(&wrong, W, x, RunMode{}), ShapeError);
}

TEST_CASE("decode_answer: first token from head(z), greedy determinism") {
    Backbone bb(small_config());
    Rng rng(10);
    auto img = random_image(8, rng);
    std::vector<int> q{12, 13};
    auto enc = bb.encode_prefix(img, q, RunMode{});
    // LM head row 7 aligned with z so token 7 is the argmax by construction.
    Var head = bb.params().get("backbone.lm_head");
    head.mutable_value().fill(0.0);
    for (std::size_t i = 0; i < 16; ++i) head.mutable_value().at(7, i) = enc.z0.value()[i];
    KVCache c = enc.cache;
    auto ans = bb.decode_answer(c, enc.z0, 4);
    REQUIRE_FALSE(ans.empty());
    CHECK(ans[0] == 7);
    // One forward step per emitted token, except after the token that hits max_len.
    CHECK(c.length() - enc.cache.length() == (ans.size() == 4 ? 3 : ans.size()));
    KVCache c2 = enc.cache;
    CHECK(bb.decode_answer(c2, enc.z0, 4) == ans);
    KVCache c3 = enc.cache;
    CHECK(bb.decode_answer(c3, enc.z0, 0).empty());
}

TEST_CASE("parameter accounting and frozen base") {
    BackboneConfig c = small_config();
    Backbone bb(c);
    const std::size_t r = c.lora_rank, d = c.d, ff = c.d_ff;
    const std::size_t by_hand = c.n_layers * (4 * (r * d + d * r) + (r * d + ff * r) + (r * ff + d * r));
    CHECK(bb.analytic_lora_count() == by_hand);
    CHECK(bb.params().count(true) == by_hand);
    CHECK(bb.params().count_in_namespace("lora") == by_hand);
    for (const auto& n : bb.params().trainable_names()) CHECK(ParamStore::namespace_of(n) == "lora");
}

TEST_CASE("latent loop contract") {
    Backbone bb(small_config());
    Rng rng(12);
    auto img = random_image(8, rng);
    std::vector<int> q{4, 5, 6};
    auto enc = bb.encode_prefix(img, q, RunMode{});

    auto zero = latent_loop(bb, enc, 0, RunMode{});
    CHECK(zero.trace.depth() == 0);
    CHECK(zero.cache.length() == enc.cache.length());
    CHECK_THROWS_AS(latent_loop(bb, enc, -1, RunMode{}), ArgumentError);

    auto two = latent_loop(bb, enc, 2, RunMode{});
    KVCache manual = enc.cache;
    Var z1 = bb.forward_step(enc.z0, manual, RunMode{});
    Var z2 = bb.forward_step(z1, manual, RunMode{});
    CHECK(two.trace.states[0].value() == z1.value());
    CHECK(two.trace.states[1].value() == z2.value());
    CHECK(two.cache.length() == enc.cache.length() + 2);
    CHECK(enc.cache.length() == bb.config().visual_tokens() + q.size());
    CHECK(cosine_similarity(z1.value().values(), z2.value().values()) < 1.0 - 1e-6);

    // Training path (graph recording, train flag off) vs inference path (no graph).
    auto train_path = latent_loop(bb, bb.encode_prefix(img, q, RunMode{}), 4, RunMode{});
    LatentLoopResult infer;
    {
        NoGradGuard ng;
        infer = latent_loop(bb, bb.encode_prefix(img, q, RunMode{}), 4, RunMode{});
    }
    for (std::size_t k = 0; k < 4; ++k) CHECK(train_path.trace.states[k].value() == infer.trace.states[k].value());

    KVCache nearly_full = enc.cache;
    while (nearly_full.length() < bb.config().max_positions - 1) bb.forward_step(enc.z0, nearly_full, RunMode{});
    PrefixEncoding tight{enc.hidden, nearly_full, enc.z0};
    CHECK_THROWS_AS(latent_loop(bb, tight, 2, RunMode{}), LengthError);
}
