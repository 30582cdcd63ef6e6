#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "vital/grad_check.hpp"
#include "vital/training.hpp"
#include "vital/vocab.hpp"

using namespace vital;

namespace {

BackboneConfig tiny_backbone() {
    BackboneConfig c;
    c.d = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    c.lora_rank = 2;
    c.lora_alpha = 4.0;
    return c;
}

ScaffoldConfig tiny_scaffold(std::size_t d_v = 16) {
    ScaffoldConfig s;
    s.d_dec = 8;
    s.dec_layers = 1;
    s.dec_heads = 2;
    s.dec_ff = 16;
    s.d_v = d_v;
    return s;
}

const std::vector<FiveTuple>& small_set() {
    static const std::vector<FiveTuple> data = [] {
        DatasetConfig dc;
        dc.n = 40;
        dc.seed = 3;
        MockTeacher teacher;
        return build_samples(dc, teacher).accepted;
    }();
    return data;
}

TrainConfig quick_train() {
    TrainConfig t;
    t.batch_size = 4;
    return t;
}

void randomize_adapters(Model& m, Rng& rng, double sd = 0.1) {
    for (auto& [name, v] : m.all_params())
        if (name.size() > 2 && name.substr(name.size() - 2) == ".B") {
            Var h = v;
            for (auto& x : h.mutable_value().values()) x = rng.normal(0.0, sd);
        }
}

std::vector<const FiveTuple*> pointers(const std::vector<FiveTuple>& data, std::size_t n) {
    std::vector<const FiveTuple*> out;
    for (std::size_t i = 0; i < n && i < data.size(); ++i) out.push_back(&data[i]);
    return out;
}

bool same_values(const Checkpoint& a, const Checkpoint& b) { return a.tensors == b.tensors; }

}  // namespace

TEST_CASE("trainer and inference share one latent loop object") {
    CHECK(&training_latent_loop() == &latent_loop);
}

TEST_CASE("joint loss: task-only weights give the task loss exactly") {
    Model m(tiny_backbone(), tiny_scaffold());
    TrainConfig cfg = quick_train();
    cfg.lambda_text = 0.0;
    cfg.lambda_visual = 0.0;
    for (const auto& s : small_set()) {
        auto loss = sample_loss(m, s, cfg, RunMode{});
        CHECK(loss.total.value()[0] == loss.task);
        CHECK(loss.text == 0.0);
        CHECK(loss.visual == 0.0);
    }
    // No scaffolding needed at all in that configuration.
    Model bare(tiny_backbone(), std::nullopt);
    CHECK_NOTHROW(sample_loss(bare, small_set()[0], cfg, RunMode{}));
}

TEST_CASE("joint loss recomposes from its terms") {
    Model m(tiny_backbone(), tiny_scaffold());
    Rng rng(4);
    randomize_adapters(m, rng);
    const TrainConfig cfg = quick_train();
    for (std::size_t i = 0; i < 10; ++i) {
        const auto& s = small_set()[i];
        auto loss = sample_loss(m, s, cfg, RunMode{});
        CHECK(loss.text > 0.0);
        CHECK(loss.visual > 0.0);
        CHECK(loss.total.value()[0] == doctest::Approx(loss.task + 1.0 * loss.text + 0.1 * loss.visual).epsilon(1e-12));
    }
    auto batch = pointers(small_set(), 6);
    auto joint = compute_joint_loss(m, batch, cfg, RunMode{});
    double mean = 0.0;
    for (auto* s : batch) mean += sample_loss(m, *s, cfg, RunMode{}).total.value()[0];
    CHECK(joint.total.value()[0] == doctest::Approx(mean / 6.0).epsilon(1e-12));
    CHECK_THROWS_AS(compute_joint_loss(m, {}, cfg, RunMode{}), EmptyLossError);
}

TEST_CASE("task loss of a random model sits near uniform; fixed K covers the text prefix") {
    Model m(tiny_backbone(), tiny_scaffold());
    TrainConfig cfg = quick_train();
    const double lnV = std::log(static_cast<double>(Vocabulary::standard().size()));
    auto loss = sample_loss(m, small_set()[0], cfg, RunMode{});
    CHECK(loss.task < 2.0 * lnV);
    cfg.fixed_K = 0;
    auto k0 = sample_loss(m, small_set()[0], cfg, RunMode{});
    CHECK(k0.text == 0.0);
    CHECK(k0.visual == 0.0);
    CHECK(effective_K(small_set()[0], cfg) == 0);
    cfg.fixed_K = 4;
    CHECK(effective_K(small_set()[0], cfg) == 4);
    CHECK(sample_loss(m, small_set()[0], cfg, RunMode{}).text > 0.0);
}

TEST_CASE("joint loss gradient matches finite differences on the micro config") {
    BackboneConfig bc;
    bc.d = 8;
    bc.n_layers = 1;
    bc.n_heads = 2;
    bc.d_ff = 16;
    bc.lora_rank = 2;
    bc.lora_alpha = 2.0;
    Model m(bc, tiny_scaffold(4));
    Rng rng(11);
    randomize_adapters(m, rng, 0.3);

    FiveTuple s;
    s.image = ToyImage(32);
    for (auto& p : s.image.pixels) p = rng.uniform();
    const auto& vocab = Vocabulary::standard();
    s.question_tokens = vocab.encode("is the liver visible in this image ?");
    s.answer_tokens = vocab.encode("yes .");
    s.chain.steps = {vocab.encode("a very bright region"), vocab.encode("so the liver is present")};
    s.K = 2;
    Tensor f(1, 4), g(1, 4);
    for (auto& v : f.values()) v = rng.normal();
    for (auto& v : g.values()) v = rng.normal();
    s.roi.feature = kernels::l2_normalize(f);
    s.roi.global = kernels::l2_normalize(g);

    TrainConfig cfg;
    for (auto mode : {VisualTargetMode::shared, VisualTargetMode::per_step}) {
        cfg.visual_mode = mode;
        auto report = grad_check([&] { return sample_loss(m, s, cfg, RunMode{}).total; }, m.trainable(),
                                 GradCheckOptions{1e-4, 1e-3, 1e-4, 12});
        INFO("max rel error " << report.max_rel_error);
        CHECK(report.passed);
        CHECK(report.max_rel_error <= 1e-3);
        CHECK(report.entries_checked > 100);
    }
}

TEST_CASE("trainable set is adapters plus scaffolding, including pj_in") {
    Model m(tiny_backbone(), tiny_scaffold());
    const auto names = m.trainable_names();
    bool has_pj_in = false;
    std::size_t lora = 0, scaffold = 0;
    for (const auto& n : names) {
        const auto ns = ParamStore::namespace_of(n);
        CHECK((ns == "lora" || ns == "scaffold"));
        lora += ns == "lora";
        scaffold += ns == "scaffold";
        has_pj_in |= n.find("pj_in") != std::string::npos;
    }
    CHECK(has_pj_in);
    CHECK(lora == m.backbone().params().trainable().size());
    CHECK(scaffold == m.scaffolding().params().all().size());
    for (const auto& [name, v] : m.all_params())
        CHECK(v.requires_grad() == (ParamStore::namespace_of(name) != "backbone"));
}

TEST_CASE("make_batches groups by K and covers every sample once") {
    Rng rng(5);
    auto all = pointers(small_set(), small_set().size());
    auto batches = make_batches(all, 4, quick_train(), rng);
    std::size_t total = 0;
    std::set<const FiveTuple*> seen;
    for (const auto& b : batches) {
        CHECK(!b.empty());
        CHECK(b.size() <= 4);
        for (auto* s : b) {
            CHECK(s->K == b.front()->K);
            seen.insert(s);
        }
        total += b.size();
    }
    CHECK(total == all.size());
    CHECK(seen.size() == all.size());
}

TEST_CASE("train_phase: zero epochs, decreasing loss, frozen base untouched") {
    Model m(tiny_backbone(), tiny_scaffold());
    const Checkpoint start = m.to_checkpoint();

    auto none = train_phase(m, {1, 0, 64, 0}, small_set(), quick_train());
    CHECK(same_values(none.checkpoint, start));
    CHECK(none.log.empty());

    auto res = train_phase(m, {1, 0, 1, 5}, small_set(), quick_train());
    REQUIRE(res.epoch_mean_total.size() == 5);
    CHECK(res.epoch_mean_total.back() < res.epoch_mean_total.front());
    CHECK_FALSE(res.aborted);
    std::size_t admitted = 0;
    for (const auto& s : small_set()) admitted += s.K <= 1;
    CHECK(res.samples == admitted);

    for (const auto& [name, t] : res.checkpoint.tensors)
        if (ParamStore::namespace_of(name) == "backbone") CHECK(t == start.tensors.at(name));
    bool adapters_moved = false;
    for (const auto& [name, t] : res.checkpoint.tensors)
        if (ParamStore::namespace_of(name) == "lora") adapters_moved |= !(t == start.tensors.at(name));
    CHECK(adapters_moved);
}

TEST_CASE("train_phase aborts on a non-finite loss and keeps the last good parameters") {
    Model m(tiny_backbone(), tiny_scaffold());
    for (auto& [name, v] : m.all_params())
        if (name.find(".B") != std::string::npos) {
            Var h = v;
            h.mutable_value().values()[0] = std::nan("");
            break;
        }
    const Checkpoint poisoned = m.to_checkpoint();
    auto res = train_phase(m, {1, 0, 64, 2}, small_set(), quick_train());
    CHECK(res.aborted);
    CHECK(res.log.empty());
    CHECK(res.checkpoint.tensors.size() == poisoned.tensors.size());
    Model m2(tiny_backbone(), tiny_scaffold());
    m2.load_values(poisoned);
    CHECK_THROWS_AS(run_curriculum(m2, CurriculumStrategy::fullmix, small_set(), quick_train(), {1, 1, 1}),
                    NumericalError);
}

TEST_CASE("curriculum schedules") {
    const CurriculumEpochs ep{2, 3, 4};
    auto three = curriculum_phases(CurriculumStrategy::three_phase, ep);
    REQUIRE(three.size() == 3);
    CHECK(three[0].max_K == 1);
    CHECK(three[1].max_K == 2);
    CHECK(three[2].admits(4));
    CHECK(three[2].epochs == 4);

    auto two = curriculum_phases(CurriculumStrategy::two_phase, ep);
    REQUIRE(two.size() == 2);
    CHECK(two[0].max_K == 2);
    CHECK(two[0].epochs == 5);

    auto mix = curriculum_phases(CurriculumStrategy::fullmix, ep);
    REQUIRE(mix.size() == 1);
    for (int K = 1; K <= 4; ++K) CHECK(mix[0].admits(K));
    CHECK(mix[0].epochs == 9);

    auto rev = curriculum_phases(CurriculumStrategy::reverse, ep);
    REQUIRE(rev.size() == 3);
    CHECK(rev[0].admits(4));
    CHECK_FALSE(rev[0].admits(3));
    CHECK(rev[1].admits(3));
    CHECK_FALSE(rev[1].admits(2));
    CHECK(rev[2].admits(1));

    for (auto s : {CurriculumStrategy::three_phase, CurriculumStrategy::two_phase, CurriculumStrategy::fullmix,
                   CurriculumStrategy::reverse})
        CHECK(curriculum_strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(curriculum_strategy_from_string("random"), ConfigError);
    CHECK(CurriculumEpochs::full().phase3 == 10);
}

TEST_CASE("three-phase curriculum emits three checkpoints and warm-starts") {
    Model m(tiny_backbone(), tiny_scaffold());
    auto res = run_curriculum(m, CurriculumStrategy::three_phase, small_set(), quick_train(), {2, 1, 1});
    REQUIRE(res.phases.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(res.phases[i].phase.id == static_cast<int>(i + 1));
    CHECK(same_values(m.to_checkpoint(), res.phases.back().checkpoint));

    // Phase 2 starting point (phase 1 output) against a fresh init on the same probe batch.
    std::vector<const FiveTuple*> probe;
    for (const auto& s : small_set())
        if (s.K <= 1) probe.push_back(&s);
    Model warm(tiny_backbone(), tiny_scaffold());
    warm.load_values(res.phases[0].checkpoint);
    Model fresh(tiny_backbone(), tiny_scaffold());
    const double lw = compute_joint_loss(warm, probe, quick_train(), RunMode{}).total.value()[0];
    const double lf = compute_joint_loss(fresh, probe, quick_train(), RunMode{}).total.value()[0];
    CHECK(lw <= lf);

    auto tmp = std::filesystem::temp_directory_path() / "vital_train_metrics.csv";
    write_metrics_csv(tmp, res.phases);
    CHECK(std::filesystem::file_size(tmp) > 0);
    std::filesystem::remove(tmp);
}

TEST_CASE("trained checkpoint: save, load, save is byte identical; runs are seeded") {
    Model m(tiny_backbone(), tiny_scaffold());
    auto res = run_curriculum(m, CurriculumStrategy::fullmix, small_set(), quick_train(), {1, 0, 0});
    const auto bytes = res.phases.back().checkpoint.serialize();
    const auto again = Checkpoint::deserialize(bytes).serialize();
    CHECK(bytes == again);

    Model m2(tiny_backbone(), tiny_scaffold());
    auto res2 = run_curriculum(m2, CurriculumStrategy::fullmix, small_set(), quick_train(), {1, 0, 0});
    CHECK(res2.phases.back().checkpoint.serialize() == bytes);
}

TEST_CASE("loss-weight sweep: grid shape, default cell, singleton equals direct run") {
    const auto& data = small_set();
    std::vector<FiveTuple> train(data.begin(), data.begin() + 24), eval(data.begin() + 24, data.end());
    SweepSetup setup;
    setup.backbone = tiny_backbone();
    setup.scaffold = tiny_scaffold();
    setup.train = quick_train();
    setup.strategy = CurriculumStrategy::fullmix;
    setup.epochs = {1, 0, 0};
    setup.train.max_answer_len = 6;

    auto single = sweep_loss_weights({1.0}, {0.1}, train, eval, setup);
    REQUIRE(single.size() == 1);
    CHECK(single[0].accuracy == train_and_evaluate(train, eval, setup));

    auto grid = sweep_loss_weights({0.0, 0.5}, {0.0}, train, eval, setup);
    CHECK(grid.size() == 3 * 2);
    bool has_default = false;
    for (const auto& c : grid) has_default |= c.lambda_text == 1.0 && c.lambda_visual == 0.1;
    CHECK(has_default);

    // A failing cell is recorded and the sweep carries on.
    SweepSetup broken = setup;
    broken.scaffold.d_v = 3;
    auto failed = sweep_loss_weights({0.0, 1.0}, {0.1}, train, eval, broken);
    CHECK(failed.size() == 2);
    for (const auto& c : failed) CHECK(c.failed);
}

TEST_CASE("TrainConfig JSON round trip and validation") {
    TrainConfig c;
    c.lambda_text = 0.5;
    c.visual_mode = VisualTargetMode::per_step;
    c.fixed_K = 2;
    nlohmann::json j = c;
    TrainConfig back = j.get<TrainConfig>();
    CHECK(back.lambda_text == 0.5);
    CHECK(back.visual_mode == VisualTargetMode::per_step);
    CHECK(back.fixed_K == 2);
    j["lr"] = -1.0;
    CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
    j["lr"] = 1e-3;
    j["lambda_visual"] = -0.1;
    CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
}
