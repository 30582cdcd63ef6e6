#include "vital/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <optional>

#include "vital/error.hpp"
#include "vital/vocab.hpp"

namespace vital {

namespace fs = std::filesystem;

void tokenize(FiveTuple& t) {
    const auto& vocab = Vocabulary::standard();
    t.question_tokens = vocab.encode(t.question);
    t.answer_tokens = vocab.encode(t.answer);
    t.chain.steps.clear();
    for (const auto& s : t.chain_text) t.chain.steps.push_back(vocab.encode(s));
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
    j = {{"n", c.n},
         {"seed", c.seed},
         {"image_size", c.synthetic.image_size},
         {"background", c.synthetic.background},
         {"background_noise", c.synthetic.background_noise},
         {"target_noise", c.synthetic.target_noise},
         {"type_weights", c.type_weights},
         {"gate", c.gate},
         {"threshold_T", c.roi.threshold_T},
         {"margin_P", c.roi.margin_P},
         {"crop_patch_pixels", c.roi.crop_patch_pixels},
         {"encoder_grid", c.encoder_grid},
         {"encoder_dim", c.encoder_dim},
         {"encoder_seed", c.encoder_seed},
         {"max_retries", c.max_retries},
         {"test_fraction", c.test_fraction}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
    c = DatasetConfig{};
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("n", c.n);
    opt("seed", c.seed);
    opt("image_size", c.synthetic.image_size);
    opt("background", c.synthetic.background);
    opt("background_noise", c.synthetic.background_noise);
    opt("target_noise", c.synthetic.target_noise);
    opt("type_weights", c.type_weights);
    opt("gate", c.gate);
    opt("threshold_T", c.roi.threshold_T);
    opt("margin_P", c.roi.margin_P);
    opt("crop_patch_pixels", c.roi.crop_patch_pixels);
    opt("encoder_grid", c.encoder_grid);
    opt("encoder_dim", c.encoder_dim);
    opt("encoder_seed", c.encoder_seed);
    opt("max_retries", c.max_retries);
    opt("test_fraction", c.test_fraction);
    if (c.max_retries < 0 || c.max_retries > 4) throw ConfigError("max_retries must lie in [0, 4]");
    if (!(c.test_fraction >= 0.0 && c.test_fraction <= 1.0)) throw ConfigError("test_fraction must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const DatasetStats& s) {
    nlohmann::json per_k = nlohmann::json::object();
    for (const auto& [k, n] : s.per_K) per_k[std::to_string(k)] = n;
    nlohmann::json rounds = nlohmann::json::object();
    for (int r = 1; r <= kGateRounds; ++r) rounds[std::to_string(r)] = s.round_failures[static_cast<std::size_t>(r)];
    j = {{"requested", s.requested},
         {"accepted", s.accepted},
         {"rejected", s.rejected},
         {"total_retries", s.total_retries},
         {"max_retries_used", s.max_retries_used},
         {"transport_failures", s.transport_failures},
         {"round_failures", rounds},
         {"per_K", per_k},
         {"per_type", s.per_type},
         {"per_target", s.per_target},
         {"per_split", s.per_split}};
}

std::string sample_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%06zu", index);
    return buf;
}

namespace {

enum Stream : std::uint64_t { kImageStream = 1, kQuestionStream = 2, kSplitStream = 3 };

}  // namespace

BuildResult build_samples(const DatasetConfig& cfg, Teacher& teacher) {
    if (cfg.max_retries < 0 || cfg.max_retries > 4) throw ConfigError("max_retries must lie in [0, 4]");
    const ToyEncoder encoder(cfg.encoder_grid, cfg.encoder_dim, cfg.encoder_seed);
    BuildResult out;
    out.stats.requested = cfg.n;

    for (std::size_t i = 0; i < cfg.n; ++i) {
        const std::string id = sample_id(i);
        Rng img_rng(derive_seed(cfg.seed, kImageStream, i));
        Rng q_rng(derive_seed(cfg.seed, kQuestionStream, i));
        SyntheticSample sample = generate_sample(cfg.synthetic, img_rng);
        GeneratedQuestion q = generate_question(sample.meta, q_rng, cfg.type_weights);

        TeacherRequest req;
        req.sample_id = i;
        req.meta = sample.meta;
        req.question = q;
        req.overlay = render_overlay(sample.image, sample.mask);
        const GateContext ctx{q.type, sample.meta.type, sample.meta.name};

        std::optional<QualityReport> accepted;
        std::string last_reason;
        int attempt = 0;
        for (; attempt <= cfg.max_retries; ++attempt) {
            req.attempt = attempt;
            req.strict_rules = attempt > 0;
            nlohmann::json line = {{"id", id}, {"attempt", attempt}, {"strict_rules", req.strict_rules}};
            QualityReport rep;
            try {
                const std::string raw = teacher.generate(req);
                line["raw"] = raw;
                rep = quality_gate(raw, ctx, cfg.gate);
                rep.retries = attempt;
                line["report"] = rep;
            } catch (const TransportError& e) {
                ++out.stats.transport_failures;
                line["transport_error"] = e.what();
                out.transcripts.push_back(std::move(line));
                last_reason = e.what();
                req.violations.push_back(last_reason);
                continue;
            }
            out.transcripts.push_back(std::move(line));
            if (rep.passed()) {
                accepted = std::move(rep);
                break;
            }
            ++out.stats.round_failures[static_cast<std::size_t>(rep.failed_round)];
            last_reason = "round " + std::to_string(rep.failed_round) + ": " + rep.detail;
            req.violations.push_back(last_reason);
        }

        if (!accepted) {
            out.rejected.push_back({id, cfg.max_retries + 1, last_reason});
            ++out.stats.rejected;
            continue;
        }

        FiveTuple t;
        t.id = id;
        t.image = std::move(sample.image);
        t.mask = std::move(sample.mask);
        t.question = q.text;
        t.answer = accepted->answer;
        t.chain_text = accepted->chain;
        t.type = q.type;
        t.meta = sample.meta;
        t.asked_target = q.asked_target;
        t.K = static_cast<int>(t.chain_text.size());
        t.retries = attempt;
        Rng split_rng(derive_seed(cfg.seed, kSplitStream, i));
        t.split = split_rng.uniform() < cfg.test_fraction ? "test" : "train";
        t.roi = extract_roi(encoder, t.image, t.mask, cfg.roi);
        tokenize(t);

        auto& s = out.stats;
        ++s.accepted;
        s.total_retries += static_cast<std::size_t>(attempt);
        s.max_retries_used = std::max(s.max_retries_used, static_cast<std::size_t>(attempt));
        ++s.per_K[t.K];
        ++s.per_type[to_string(t.type)];
        ++s.per_target[t.meta.name];
        ++s.per_split[t.split];
        out.accepted.push_back(std::move(t));
    }
    return out;
}

namespace {

nlohmann::json manifest_line(const FiveTuple& t) {
    return {{"id", t.id},
            {"image", "images/" + t.id + ".pgm"},
            {"mask", "masks/" + t.id + ".pgm"},
            {"roi", "roi/" + t.id + ".roi"},
            {"question", t.question},
            {"answer", t.answer},
            {"reasoning_chain", t.chain_text},
            {"latent_steps", t.K},
            {"question_type", to_string(t.type)},
            {"asked_target", t.asked_target},
            {"target", t.meta},
            {"retries", t.retries},
            {"split", t.split}};
}

void write_lines(const fs::path& path, const std::vector<nlohmann::json>& lines) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    for (const auto& l : lines) f << l.dump() << '\n';
}

}  // namespace

void write_dataset(const fs::path& dir, const BuildResult& result, const DatasetConfig& cfg) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    fs::create_directories(dir / "roi");
    std::vector<nlohmann::json> manifest;
    for (const auto& t : result.accepted) {
        save_image(dir / "images" / (t.id + ".pgm"), t.image);
        save_mask(dir / "masks" / (t.id + ".pgm"), t.mask);
        save_roi(dir / "roi" / (t.id + ".roi"), t.roi);
        manifest.push_back(manifest_line(t));
    }
    write_lines(dir / "manifest.jsonl", manifest);
    write_lines(dir / "transcripts.jsonl", result.transcripts);
    std::vector<nlohmann::json> rejected;
    for (const auto& r : result.rejected)
        rejected.push_back({{"id", r.id}, {"attempts", r.attempts}, {"reason", r.reason}});
    write_lines(dir / "rejected.jsonl", rejected);
    std::ofstream(dir / "stats.json") << nlohmann::json(result.stats).dump(2) << '\n';
    std::ofstream(dir / "dataset_config.json") << nlohmann::json(cfg).dump(2) << '\n';
}

DatasetStats build_dataset(const fs::path& dir, const DatasetConfig& cfg, Teacher& teacher) {
    BuildResult r = build_samples(cfg, teacher);
    write_dataset(dir, r, cfg);
    return r.stats;
}

std::vector<FiveTuple> load_dataset(const fs::path& dir) {
    std::ifstream f(dir / "manifest.jsonl");
    if (!f) throw DataError("no manifest.jsonl under " + dir.string());
    std::vector<FiveTuple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            FiveTuple t;
            t.id = j.at("id").get<std::string>();
            t.image = load_image(dir / j.at("image").get<std::string>());
            t.mask = load_mask(dir / j.at("mask").get<std::string>());
            t.roi = load_roi(dir / j.at("roi").get<std::string>());
            t.question = j.at("question").get<std::string>();
            t.answer = j.at("answer").get<std::string>();
            t.chain_text = j.at("reasoning_chain").get<std::vector<std::string>>();
            t.K = j.at("latent_steps").get<int>();
            t.type = question_type_from_string(j.at("question_type").get<std::string>());
            t.asked_target = j.at("asked_target").get<std::string>();
            t.meta = j.at("target").get<TargetMeta>();
            t.retries = j.at("retries").get<int>();
            t.split = j.at("split").get<std::string>();
            const auto [kmin, kmax] = k_range(t.type);
            if (t.K != static_cast<int>(t.chain_text.size()) || t.K < kmin || t.K > kmax)
                throw DataError("latent_steps outside the range of its question type");
            tokenize(t);
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<FiveTuple> select_split(const std::vector<FiveTuple>& data, const std::string& split) {
    std::vector<FiveTuple> out;
    for (const auto& t : data)
        if (t.split == split) out.push_back(t);
    return out;
}

}  // namespace vital
