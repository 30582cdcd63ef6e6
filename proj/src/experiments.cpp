#include "vital/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace vital {

DeskConfig DeskConfig::for_budget(double minutes) {
    if (!(minutes > 0.0)) throw ConfigError("budget must be positive");
    DeskConfig c;
    // The full desk run (eight trainings plus diagnostics) takes about 25 minutes.
    const double scale = std::min(1.0, minutes / 25.0);
    if (scale < 1.0) {
        c.n_train = std::max<std::size_t>(48, static_cast<std::size_t>(std::lround(c.n_train * scale)));
        c.n_eval = std::max<std::size_t>(24, static_cast<std::size_t>(std::lround(c.n_eval * scale)));
        c.n_probe = std::max<std::size_t>(12, static_cast<std::size_t>(std::lround(c.n_probe * scale)));
        if (scale < 0.2) c.epochs = {1, 1, 2};
        c.latency.repetitions = std::max<std::size_t>(5, static_cast<std::size_t>(std::lround(50 * scale)));
        c.latency.warmup = 2;
    }
    return c;
}

void to_json(nlohmann::json& j, const DeskConfig& c) {
    j = {{"seed", c.seed},
         {"n_train", c.n_train},
         {"n_eval", c.n_eval},
         {"n_probe", c.n_probe},
         {"backbone", c.backbone},
         {"scaffold", c.scaffold},
         {"train", c.train},
         {"strategy", to_string(c.strategy)},
         {"epochs", {c.epochs.phase1, c.epochs.phase2, c.epochs.phase3}},
         {"eval_K", c.eval_K},
         {"similarity_K", c.similarity_K},
         {"k_ablation", c.k_ablation},
         {"latency", {{"repetitions", c.latency.repetitions},
                      {"warmup", c.latency.warmup},
                      {"answer_len", c.latency.answer_len}}}};
}

void from_json(const nlohmann::json& j, DeskConfig& c) {
    c = DeskConfig{};
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("seed", c.seed);
    opt("n_train", c.n_train);
    opt("n_eval", c.n_eval);
    opt("n_probe", c.n_probe);
    opt("backbone", c.backbone);
    opt("scaffold", c.scaffold);
    opt("train", c.train);
    opt("eval_K", c.eval_K);
    opt("similarity_K", c.similarity_K);
    opt("k_ablation", c.k_ablation);
    if (j.contains("strategy")) c.strategy = curriculum_strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("epochs")) {
        const auto e = j.at("epochs").get<std::vector<std::size_t>>();
        if (e.size() != 3) throw ConfigError("epochs takes three phase counts");
        c.epochs = {e[0], e[1], e[2]};
    }
    if (j.contains("latency")) {
        const auto& l = j.at("latency");
        c.latency.repetitions = l.value("repetitions", c.latency.repetitions);
        c.latency.warmup = l.value("warmup", c.latency.warmup);
        c.latency.answer_len = l.value("answer_len", c.latency.answer_len);
    }
    if (c.n_train == 0 || c.n_eval == 0 || c.n_probe == 0) throw ConfigError("sample counts must be positive");
    if (c.similarity_K < 2) throw ConfigError("similarity_K must be >= 2");
}

DeskData build_desk_data(const DeskConfig& cfg) {
    DeskData out;
    MockTeacher teacher;
    DatasetConfig train;
    train.n = cfg.n_train;
    train.seed = cfg.seed;
    train.test_fraction = 0.0;
    out.train = build_samples(train, teacher).accepted;

    DatasetConfig eval = train;
    eval.n = cfg.n_eval;
    eval.seed = derive_seed(cfg.seed, 0xE7A1);
    eval.type_weights = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    out.eval = build_samples(eval, teacher).accepted;

    DatasetConfig probe = train;
    probe.n = cfg.n_probe;
    probe.seed = derive_seed(cfg.seed, 0x9B0E);
    out.probe = build_samples(probe, teacher).accepted;
    if (out.train.empty() || out.eval.empty() || out.probe.empty()) throw DataError("desk dataset came out empty");
    return out;
}

std::vector<Variant> ablation_variants() {
    return {{"task_only", 0.0, 0.0}, {"semantic", 1.0, 0.0}, {"visual", 0.0, 0.1}, {"dual", 1.0, 0.1}};
}

void to_json(nlohmann::json& j, const VariantResult& r) {
    j = {{"variant", r.variant.name},
         {"lambda_text", r.variant.lambda_text},
         {"lambda_visual", r.variant.lambda_visual},
         {"visual_mode", to_string(r.variant.visual_mode)},
         {"fixed_K", r.variant.fixed_K},
         {"accuracy", r.accuracy},
         {"similarity", r.similarity},
         {"final_loss", r.final_loss},
         {"checkpoint_digest", r.checkpoint_digest}};
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::uint8_t b : ckpt.serialize()) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

VariantResult run_variant(const DeskConfig& cfg, const DeskData& data, const Variant& v, Model* out) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = cfg.train;
    tc.lambda_text = v.lambda_text;
    tc.lambda_visual = v.lambda_visual;
    tc.visual_mode = v.visual_mode;
    tc.fixed_K = v.fixed_K;
    BackboneConfig bc = cfg.backbone;
    bc.seed = derive_seed(cfg.seed, 0xBB);
    ScaffoldConfig sc = cfg.scaffold;
    sc.seed = derive_seed(cfg.seed, 0x5C);
    tc.seed = derive_seed(cfg.seed, 0x7C);

    Model model(bc, sc);
    auto run = run_curriculum(model, cfg.strategy, data.train, tc, cfg.epochs);
    VariantResult r;
    r.variant = v;
    const auto& last = run.phases.back();
    r.final_loss = last.epoch_mean_total.empty() ? 0.0 : last.epoch_mean_total.back();
    r.checkpoint_digest = checkpoint_digest(last.checkpoint);
    const int eval_K = v.fixed_K >= 0 ? v.fixed_K : cfg.eval_K;
    r.accuracy = closed_ended_accuracy(model, data.eval, eval_K, tc.max_answer_len);
    const int sim_K = v.fixed_K >= 2 ? v.fixed_K : cfg.similarity_K;
    // Undefined below two steps; NaN serializes as null.
    r.similarity = v.fixed_K >= 0 && v.fixed_K < 2 ? std::nan("")
                                                   : interstep_similarity(model, data.probe, sim_K).mean_off_diagonal();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out) *out = std::move(model);
    return r;
}

}  // namespace vital
