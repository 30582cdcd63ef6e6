#include <filesystem>

#include "doctest.h"
#include "vital/latent_loop.hpp"
#include "vital/model.hpp"
#include "vital/vocab.hpp"

using namespace vital;

namespace {

BackboneConfig tiny_backbone() {
    BackboneConfig c;
    c.d = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 16;
    c.image_size = 8;
    c.patch_grid = 2;
    c.lora_rank = 2;
    c.max_positions = 40;
    return c;
}

ScaffoldConfig tiny_scaffold() {
    ScaffoldConfig s;
    s.d_dec = 8;
    s.dec_layers = 1;
    s.dec_heads = 2;
    s.dec_ff = 8;
    s.d_v = 4;
    return s;
}

void perturb(Model& m, Rng& rng) {
    for (auto& [n, v] : m.all_params()) {
        Var h = v;
        for (auto& x : h.mutable_value().values()) x += rng.normal(0.0, 0.05);
    }
}

}  // namespace

TEST_CASE("checkpoint serialize round trip and corruption") {
    Model m(tiny_backbone(), tiny_scaffold());
    auto ck = m.to_checkpoint();
    auto bytes = ck.serialize();
    auto back = Checkpoint::deserialize(bytes);
    CHECK(back == ck);
    CHECK(back.serialize() == bytes);
    CHECK(ck.namespaces() == std::set<std::string>{"backbone", "lora", "scaffold"});

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Checkpoint::deserialize(bad), DataError);
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(Checkpoint::deserialize(truncated), DataError);

    auto path = std::filesystem::temp_directory_path() / "vital_ckpt_roundtrip.bin";
    ck.save(path);
    CHECK(Checkpoint::load(path) == ck);
    std::filesystem::remove(path);
}

TEST_CASE("detach / reattach") {
    Model m(tiny_backbone(), tiny_scaffold());
    Rng rng(3);
    perturb(m, rng);
    auto full = m.to_checkpoint();
    auto deployed = detach_scaffolding(full);
    CHECK(deployed.serialize().size() < full.serialize().size());
    CHECK_FALSE(deployed.has_namespace("scaffold"));
    CHECK_FALSE(deployed.header.contains("scaffold"));
    CHECK(deployed.parameter_count("scaffold") == 0);

    bool noop = false;
    auto twice = detach_scaffolding(deployed, &noop);
    CHECK(noop);
    CHECK(twice == deployed);

    auto again = reattach_scaffolding(deployed, full);
    CHECK(again.serialize() == full.serialize());
    CHECK_THROWS_AS(reattach_scaffolding(deployed, deployed), DataError);
}

TEST_CASE("deployed model: contamination, trainable set, identical answers") {
    Model m(tiny_backbone(), tiny_scaffold());
    Rng rng(5);
    perturb(m, rng);
    auto full = m.to_checkpoint();
    CHECK_THROWS_AS(Model::load_deployed(full), ContaminationError);

    Model deployed = Model::load_deployed(detach_scaffolding(full));
    CHECK_FALSE(deployed.has_scaffolding());
    CHECK(deployed.backbone().params().count(true) == deployed.backbone().analytic_lora_count());
    std::size_t trainable = 0;
    for (const auto& v : deployed.trainable()) trainable += v.value().size();
    CHECK(trainable == deployed.backbone().analytic_lora_count());
    CHECK_THROWS_AS(deployed.scaffolding(), DetachedError);

    Model restored = Model::from_checkpoint(full);
    for (int i = 0; i < 20; ++i) {
        ToyImage img(8);
        for (auto& p : img.pixels) p = rng.uniform();
        std::vector<int> q{static_cast<int>(4 + rng.below(30)), static_cast<int>(4 + rng.below(30))};
        for (int K : {0, 2, 4}) {
            auto a = run_full_inference(restored, img, q, K, 6);
            auto b = run_full_inference(deployed, img, q, K, 6);
            CHECK(a.answer == b.answer);
            CHECK(a.trace.depth() == static_cast<std::size_t>(K));
            auto c = run_full_inference(restored, img, q, K, 6);
            CHECK(c.answer == a.answer);
        }
    }
    CHECK(restored.scaffolding().use_count() == 0);
}

TEST_CASE("checkpoint load rejects mismatched parameters") {
    Model m(tiny_backbone(), std::nullopt);
    auto ck = m.to_checkpoint();
    auto missing = ck;
    missing.tensors.erase(missing.tensors.begin());
    CHECK_THROWS_AS(Model::from_checkpoint(missing), DataError);
    auto reshaped = ck;
    reshaped.tensors.begin()->second = Tensor(1, 1);
    CHECK_THROWS_AS(Model::from_checkpoint(reshaped), DataError);
    auto extra = ck;
    extra.tensors.emplace("lora.extra", Tensor(1, 1));
    CHECK_THROWS_AS(Model::from_checkpoint(extra), DataError);
}

TEST_CASE("heatmap properties") {
    Scaffolding s(tiny_scaffold(), 16, 40);
    Rng rng(8);
    Tensor z(1, 16);
    for (auto& v : z.values()) v = rng.normal();
    const Tensor vp = s.visual_project(Var::constant(z), RunMode{}).value();
    Tensor feats(4, 4);
    for (auto& v : feats.values()) v = rng.normal();
    for (std::size_t i = 0; i < 4; ++i) feats.at(2, i) = vp[i];
    auto h = s.heatmap(Var::constant(z), feats);
    CHECK(h[2] == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : h.values()) CHECK((v >= -1.0 && v <= 1.0));
    Tensor same(4, 4, 0.7);
    auto hc = s.heatmap(Var::constant(z), same);
    for (double v : hc.values()) CHECK(v == hc[0]);
}
