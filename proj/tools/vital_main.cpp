#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vital/acceptance.hpp"
#include "vital/diagnostics.hpp"
#include "vital/experiments.hpp"
#include "vital/training.hpp"

namespace fs = std::filesystem;
using namespace vital;
using json = nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCriteria = 5;

int exit_code(ErrorClass c) {
    switch (c) {
        case ErrorClass::config: return kExitUsage;
        case ErrorClass::data: return kExitData;
        case ErrorClass::numeric: return kExitNumeric;
        case ErrorClass::internal: return 1;
    }
    return 1;
}

fs::path output_root() {
    const char* env = std::getenv("VITAL_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

// Run directories are keyed by name, never by time.
fs::path run_dir(const std::string& explicit_out, const std::string& command, const std::string& name) {
    fs::path dir = explicit_out.empty() ? output_root() / (command + "-" + name) : fs::path(explicit_out);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
    }
}

// key=value; the value is parsed as JSON when it parses, else kept as a string.
void apply_overrides(json& flat, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + kv);
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        try {
            flat[key] = json::parse(value);
        } catch (const json::exception&) {
            flat[key] = value;
        }
    }
}

// Flat "section.field" keys become nested objects; bare keys stay top level.
json unflatten(const json& flat) {
    json out = json::object();
    for (const auto& [k, v] : flat.items()) {
        const auto dot = k.find('.');
        if (dot == std::string::npos) {
            out[k] = v;
        } else {
            out[k.substr(0, dot)][k.substr(dot + 1)] = v;
        }
    }
    return out;
}

std::vector<FiveTuple> load_split(const fs::path& dir, const std::string& split) {
    auto data = load_dataset(dir);
    if (split == "all") return data;
    auto out = select_split(data, split);
    if (out.empty()) throw DataError("split '" + split + "' of " + dir.string() + " is empty");
    return out;
}

const FiveTuple& find_sample(const std::vector<FiveTuple>& data, const std::string& id) {
    for (const auto& s : data)
        if (s.id == id) return s;
    throw DataError("no sample " + id);
}

void check_workers(int workers) {
    if (workers != 1) throw ConfigError("only --workers 1 is supported; runs are single-threaded and deterministic");
}

// ---- build-data ------------------------------------------------------------

struct BuildDataArgs {
    std::size_t n = 100;
    std::uint64_t seed = 7;
    std::string teacher = "mock";
    std::string faults;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/generate";
    std::string config;
    std::string out;
    std::string name;
};

int cmd_build_data(const BuildDataArgs& a) {
    DatasetConfig cfg;
    if (!a.config.empty()) cfg = read_json(a.config).get<DatasetConfig>();
    cfg.n = a.n;
    cfg.seed = a.seed;
    std::unique_ptr<Teacher> teacher;
    if (a.teacher == "mock") {
        teacher = std::make_unique<MockTeacher>(parse_fault_specs(a.faults), a.seed);
    } else if (a.teacher == "http") {
        if (!a.faults.empty()) throw ConfigError("--faults applies to the mock teacher only");
        teacher = std::make_unique<HttpTeacher>(a.host, a.port, a.path);
    } else {
        throw ConfigError("unknown teacher: " + a.teacher);
    }
    const fs::path dir = run_dir(a.out, "data", a.name.empty() ? "n" + std::to_string(a.n) + "-seed" + std::to_string(a.seed) : a.name);
    const auto stats = build_dataset(dir, cfg, *teacher);
    write_json(dir / "config.json", {{"command", "build-data"},
                                     {"seed", a.seed},
                                     {"teacher", a.teacher},
                                     {"faults", a.faults},
                                     {"http", {{"host", a.host}, {"port", a.port}, {"path", a.path}}},
                                     {"dataset", cfg},
                                     {"out", dir.string()}});
    std::cout << "accepted " << stats.accepted << ", rejected " << stats.rejected << ", retries " << stats.total_retries
              << " -> " << dir.string() << '\n';
    return 0;
}

// ---- extract-roi -----------------------------------------------------------

struct RoiArgs {
    std::string data;
    double T = kDefaultAreaThreshold;
    double P = kDefaultMargin;
    bool grid_search = false;
    std::vector<double> T_set{0.05, 0.10, 0.20, 0.30};
    std::vector<double> P_set{0.0, 0.03, 0.05, 0.10};
    std::string out;
    std::string name;
};

int cmd_extract_roi(const RoiArgs& a) {
    const auto data = load_dataset(a.data);
    const json dcfg = read_json(fs::path(a.data) / "dataset_config.json");
    const DatasetConfig cfg = dcfg.get<DatasetConfig>();
    ToyEncoder enc(cfg.encoder_grid, cfg.encoder_dim, cfg.encoder_seed);
    std::ostringstream key;
    key << "T" << a.T << "-P" << a.P;
    const fs::path dir = run_dir(a.out, "roi", a.name.empty() ? key.str() : a.name);
    fs::create_directories(dir / "roi");
    fs::create_directories(dir / "heatmaps");

    const RoiOptions opts{a.T, a.P, cfg.roi.crop_patch_pixels};
    std::ofstream csv(dir / "roi_metrics.csv");
    csv << "id,pathway,mask_ratio,coverage,intensity,snr\n";
    csv.precision(8);
    std::vector<RoiSampleMetrics> all;
    for (const auto& s : data) {
        const auto rec = extract_roi(enc, s.image, s.mask, opts);
        save_roi(dir / "roi" / (s.id + ".roi"), rec);
        csv << s.id << ',' << to_string(rec.pathway) << ',' << rec.mask_ratio << ',' << rec.metrics.coverage << ','
            << rec.metrics.intensity << ',';
        if (rec.metrics.snr) csv << *rec.metrics.snr;
        csv << '\n';
        all.push_back(rec.metrics);
        // Similarity of every full-image patch to the pooled ROI feature.
        const auto map = enc.encode(s.image, "full");
        std::vector<double> gray;
        for (std::size_t i = 0; i < map.grid * map.grid; ++i) {
            const auto row = kernels::l2_normalize(map.features.row_copy(i));
            double dot = 0.0;
            for (std::size_t c = 0; c < row.size(); ++c) dot += row[c] * rec.feature[c];
            gray.push_back((dot + 1.0) / 2.0);
        }
        write_pgm(dir / "heatmaps" / (s.id + ".pgm"), map.grid, map.grid, gray);
    }
    const auto summary = compute_metrics(all);
    json cfg_out = {{"command", "extract-roi"}, {"data", a.data}, {"T", a.T}, {"P", a.P}, {"grid_search", a.grid_search},
                    {"encoder", enc.id()}, {"out", dir.string()}};
    if (a.grid_search) {
        std::vector<RoiSample> samples;
        for (const auto& s : data) samples.push_back({s.image, s.mask});
        const auto grid = grid_search(enc, a.T_set, a.P_set, samples);
        write_grid_csv(dir / "grid_search.csv", grid);
        std::ofstream(dir / "grid_search.txt") << grid.report;
        std::cout << grid.report;
        cfg_out["T_set"] = a.T_set;
        cfg_out["P_set"] = a.P_set;
    }
    write_json(dir / "config.json", cfg_out);
    std::cout << "coverage " << summary.coverage << ", intensity " << summary.intensity << ", snr " << summary.snr
              << " over " << summary.samples << " samples -> " << dir.string() << '\n';
    return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    std::string strategy = "3phase";
    std::string config;
    std::string data;
    std::string out;
    std::string name;
    std::string split = "train";
    std::vector<std::string> sets;
    bool full_epochs = false;
    int workers = 1;
};

struct TrainSetup {
    BackboneConfig backbone;
    ScaffoldConfig scaffold;
    TrainConfig train;
    CurriculumEpochs epochs;
    json resolved;
};

TrainSetup resolve_train_config(const std::string& path, const std::vector<std::string>& sets, bool full_epochs) {
    json flat = path.empty() ? json::object() : read_json(path);
    if (!flat.is_object()) throw ConfigError("config must be a JSON object");
    apply_overrides(flat, sets);
    json nested = unflatten(flat);
    TrainSetup s;
    if (full_epochs) s.epochs = CurriculumEpochs::full();
    json train = json::object();
    for (const auto& [k, v] : nested.items()) {
        if (k == "backbone") {
            s.backbone = v.get<BackboneConfig>();
        } else if (k == "scaffold") {
            s.scaffold = v.get<ScaffoldConfig>();
        } else if (k == "epochs") {
            const auto e = v.get<std::vector<std::size_t>>();
            if (e.size() != 3) throw ConfigError("epochs takes three phase counts");
            s.epochs = {e[0], e[1], e[2]};
        } else {
            train[k] = v;
        }
    }
    s.train = train.get<TrainConfig>();
    for (const auto& [k, v] : train.items())
        if (!json(s.train).contains(k)) throw ConfigError("unknown config key: " + k);
    s.resolved = {{"backbone", s.backbone},
                  {"scaffold", s.scaffold},
                  {"train", s.train},
                  {"epochs", {s.epochs.phase1, s.epochs.phase2, s.epochs.phase3}}};
    return s;
}

int cmd_train(const TrainArgs& a) {
    check_workers(a.workers);
    const auto strategy = curriculum_strategy_from_string(a.strategy);
    const TrainSetup s = resolve_train_config(a.config, a.sets, a.full_epochs);
    const auto data = load_split(a.data, a.split);
    const fs::path dir = run_dir(a.out, "train", a.name.empty() ? a.strategy + "-seed" + std::to_string(s.train.seed) : a.name);
    json snapshot = s.resolved;
    snapshot["command"] = "train";
    snapshot["strategy"] = a.strategy;
    snapshot["data"] = a.data;
    snapshot["split"] = a.split;
    snapshot["out"] = dir.string();
    write_json(dir / "config.json", snapshot);

    Model model(s.backbone, s.scaffold);
    CurriculumResult res;
    try {
        res = run_curriculum(model, strategy, data, s.train, s.epochs);
    } catch (const NumericalError&) {
        // The aborted phase still left its last good parameters in the model.
        model.to_checkpoint().save(dir / "last_good.ckpt");
        throw;
    }
    write_metrics_csv(dir / "metrics.csv", res.phases);
    for (const auto& p : res.phases) p.checkpoint.save(dir / ("phase_" + std::to_string(p.phase.id) + ".ckpt"));
    const Checkpoint final_ckpt = res.phases.back().checkpoint;
    final_ckpt.save(dir / "final.ckpt");
    detach_scaffolding(final_ckpt).save(dir / "deployed.ckpt");
    for (const auto& p : res.phases)
        std::cout << "phase " << p.phase.id << " (K " << p.phase.min_K << ".." << std::min(p.phase.max_K, 4) << ", "
                  << p.samples << " samples, " << p.phase.epochs << " epochs) final epoch loss "
                  << (p.epoch_mean_total.empty() ? 0.0 : p.epoch_mean_total.back()) << '\n';
    std::cout << "checkpoints -> " << dir.string() << '\n';
    return 0;
}

// ---- eval / interpret / bench ---------------------------------------------

struct EvalArgs {
    std::string metric = "acc";
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    int K = 4;
    std::size_t max_len = 24;
    std::string sample;
    std::size_t reps = 50;
    std::size_t warmup = 5;
    std::size_t answer_len = 8;
    std::string out;
    std::string name;
    int workers = 1;
};

Model load_model(const std::string& path) { return Model::from_checkpoint(Checkpoint::load(path)); }

ToyEncoder encoder_for(const std::string& data_dir) {
    const DatasetConfig cfg = read_json(fs::path(data_dir) / "dataset_config.json").get<DatasetConfig>();
    return ToyEncoder(cfg.encoder_grid, cfg.encoder_dim, cfg.encoder_seed);
}

int write_heatmap_dirs(const Model& model, const ToyEncoder& enc, const std::vector<FiveTuple>& samples, int K,
                       const fs::path& dir) {
    std::size_t hits = 0;
    for (const auto& s : samples) {
        const auto h = heatmap_evolution(model, enc, s, K);
        write_heatmaps(dir / "heatmaps" / s.id, h);
        hits += h.final_argmax_in_gt();
    }
    std::cout << "final-step argmax inside the target on " << hits << "/" << samples.size() << " samples -> "
              << (dir / "heatmaps").string() << '\n';
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    check_workers(a.workers);
    const Model model = load_model(a.checkpoint);
    const auto data = load_split(a.data, a.split);
    const std::string key = a.metric + "-K" + (a.K < 0 ? std::string("own") : std::to_string(a.K));
    const fs::path dir = run_dir(a.out, "eval", a.name.empty() ? fs::path(a.checkpoint).stem().string() + "-" + key : a.name);
    write_json(dir / "config.json", {{"command", "eval"}, {"metric", a.metric}, {"checkpoint", a.checkpoint},
                                     {"data", a.data}, {"split", a.split}, {"K", a.K}, {"max_len", a.max_len},
                                     {"reps", a.reps}, {"warmup", a.warmup}, {"answer_len", a.answer_len},
                                     {"out", dir.string()}});
    if (a.metric == "acc" || a.metric == "f1") {
        std::map<std::string, std::pair<double, std::size_t>> by_type;
        std::ofstream pred(dir / "predictions.csv");
        pred << "id,type,K,prediction,gold,exact,f1\n";
        for (const auto& s : data) {
            if (a.metric == "acc" && !s.closed_ended()) continue;
            const std::string p = predict_answer(model, s, a.K, a.max_len);
            const double exact = normalize_for_match(p) == normalize_for_match(s.answer) ? 1.0 : 0.0;
            const double f1 = token_f1(p, s.answer);
            pred << s.id << ',' << to_string(s.type) << ',' << (a.K < 0 ? s.K : a.K) << ",\"" << p << "\",\""
                 << s.answer << "\"," << exact << ',' << f1 << '\n';
            auto& [sum, n] = by_type[to_string(s.type)];
            sum += a.metric == "acc" ? exact : f1;
            ++n;
            auto& [tsum, tn] = by_type["all"];
            tsum += a.metric == "acc" ? exact : f1;
            ++tn;
        }
        if (by_type.empty()) throw DataError("no samples to score");
        std::ofstream csv(dir / (a.metric + ".csv"));
        csv << "type,samples," << (a.metric == "acc" ? "accuracy" : "token_f1") << '\n';
        for (const auto& [t, v] : by_type) {
            csv << t << ',' << v.second << ',' << v.first / static_cast<double>(v.second) << '\n';
            std::cout << t << ": " << v.first / static_cast<double>(v.second) << " (" << v.second << ")\n";
        }
    } else if (a.metric == "sim") {
        const auto S = interstep_similarity(model, data, a.K < 2 ? 4 : a.K);
        std::ofstream csv(dir / "similarity.csv");
        csv.precision(8);
        for (std::size_t i = 0; i < S.K; ++i)
            for (std::size_t j = 0; j < S.K; ++j) csv << S.at(i, j) << (j + 1 == S.K ? '\n' : ',');
        std::vector<double> gray(S.S.size());
        for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = (S.S[i] + 1.0) / 2.0;
        write_pgm(dir / "similarity.pgm", S.K, S.K, gray);
        std::cout << "mean off-diagonal similarity " << S.mean_off_diagonal() << " over " << S.samples
                  << " samples (" << S.excluded << " excluded)\n";
    } else if (a.metric == "latency") {
        const Model deployed = Model::load_deployed(detach_scaffolding(Checkpoint::load(a.checkpoint)));
        std::vector<int> Ks;
        for (int k = 0; k <= std::max(a.K, 1); ++k) Ks.push_back(k);
        const auto table = latency_bench(deployed, data, Ks, {a.reps, a.warmup, a.answer_len});
        write_latency_csv(dir / "latency.csv", table);
        for (const auto& r : table.rows) std::cout << "K=" << r.K << " median " << r.median_ms << " ms\n";
    } else if (a.metric == "heatmap") {
        const ToyEncoder enc = encoder_for(a.data);
        std::vector<FiveTuple> picked;
        if (!a.sample.empty()) {
            picked.push_back(find_sample(data, a.sample));
        } else {
            for (std::size_t i = 0; i < data.size() && i < 8; ++i) picked.push_back(data[i]);
        }
        return write_heatmap_dirs(model, enc, picked, a.K < 1 ? 4 : a.K, dir);
    } else {
        throw ConfigError("unknown metric: " + a.metric);
    }
    std::cout << "-> " << dir.string() << '\n';
    return 0;
}

int cmd_interpret(const EvalArgs& a) {
    const Model model = load_model(a.checkpoint);
    if (!model.has_scaffolding())
        throw DetachedError("interpret needs the training checkpoint; reattach the scaffolding first");
    const auto data = load_dataset(a.data);
    const fs::path dir = run_dir(a.out, "interpret", a.name.empty() ? (a.sample.empty() ? "first" : a.sample) : a.name);
    write_json(dir / "config.json", {{"command", "interpret"}, {"checkpoint", a.checkpoint}, {"data", a.data},
                                     {"sample", a.sample}, {"K", a.K}, {"out", dir.string()}});
    const FiveTuple& s = a.sample.empty() ? data.front() : find_sample(data, a.sample);
    return write_heatmap_dirs(model, encoder_for(a.data), {s}, a.K < 1 ? 4 : a.K, dir);
}

struct BenchArgs {
    std::string k_list = "0,1,2,3,4";
    std::string checkpoint;
    std::string data;
    std::size_t reps = 50;
    std::size_t warmup = 5;
    std::size_t answer_len = 8;
    std::uint64_t seed = 7;
    std::string out;
    std::string name;
    int workers = 1;
};

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size() || v < 0) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("bad K list entry: '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty K list");
    return out;
}

int cmd_bench(const BenchArgs& a) {
    check_workers(a.workers);
    const auto Ks = parse_int_list(a.k_list);
    std::optional<Model> model;
    if (a.checkpoint.empty()) {
        model.emplace(BackboneConfig{}, std::nullopt);
    } else {
        model.emplace(Model::load_deployed(detach_scaffolding(Checkpoint::load(a.checkpoint))));
    }
    std::vector<FiveTuple> samples;
    if (a.data.empty()) {
        DatasetConfig dc;
        dc.n = 20;
        dc.seed = a.seed;
        MockTeacher teacher;
        samples = build_samples(dc, teacher).accepted;
    } else {
        samples = load_dataset(a.data);
    }
    const fs::path dir = run_dir(a.out, "bench", a.name.empty() ? (a.checkpoint.empty() ? "desk" : fs::path(a.checkpoint).stem().string()) : a.name);
    write_json(dir / "config.json", {{"command", "bench"}, {"k", Ks}, {"checkpoint", a.checkpoint}, {"data", a.data},
                                     {"reps", a.reps}, {"warmup", a.warmup}, {"answer_len", a.answer_len},
                                     {"seed", a.seed}, {"out", dir.string()}});
    const auto table = latency_bench(*model, samples, Ks, {a.reps, a.warmup, a.answer_len});
    write_latency_csv(dir / "latency.csv", table);
    std::cout << "K,median_ms,per_step_ms\n";
    for (const auto& r : table.rows) std::cout << r.K << ',' << r.median_ms << ',' << r.per_step_ms << '\n';
    std::cout << "slope " << table.slope_ms << " ms/step -> " << dir.string() << '\n';
    return 0;
}

// ---- gridsearch / reproduce -------------------------------------------------

struct GridArgs {
    std::vector<double> lambda_text{0.0, 0.5, 1.0, 2.0};
    std::vector<double> lambda_visual{0.0, 0.05, 0.1, 0.2};
    std::string data;
    std::string config;
    std::vector<std::string> sets;
    std::string strategy = "3phase";
    int eval_K = -1;
    std::string out;
    std::string name;
    int workers = 1;
};

int cmd_gridsearch(const GridArgs& a) {
    check_workers(a.workers);
    const TrainSetup s = resolve_train_config(a.config, a.sets, false);
    SweepSetup setup{s.backbone, s.scaffold, s.train, curriculum_strategy_from_string(a.strategy), s.epochs, a.eval_K};
    const auto all = load_dataset(a.data);
    const auto train = select_split(all, "train"), eval = select_split(all, "test");
    if (train.empty() || eval.empty()) throw DataError("gridsearch needs both train and test splits");
    const fs::path dir = run_dir(a.out, "gridsearch", a.name.empty() ? a.strategy : a.name);
    json snapshot = s.resolved;
    snapshot.update({{"command", "gridsearch"}, {"lambda_text", a.lambda_text}, {"lambda_visual", a.lambda_visual},
                     {"data", a.data}, {"strategy", a.strategy}, {"eval_K", a.eval_K}, {"out", dir.string()}});
    write_json(dir / "config.json", snapshot);
    const auto cells = sweep_loss_weights(a.lambda_text, a.lambda_visual, train, eval, setup);
    write_sweep_csv(dir / "sweep.csv", cells);
    for (const auto& c : cells)
        std::cout << "lambda_text " << c.lambda_text << " lambda_visual " << c.lambda_visual << ": "
                  << (c.failed ? "failed (" + c.error + ")" : std::to_string(c.accuracy)) << '\n';
    return 0;
}

struct ReproduceArgs {
    double budget = 25.0;
    std::uint64_t seed = 7;
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::string name;
    int workers = 1;
};

int cmd_reproduce(const ReproduceArgs& a) {
    check_workers(a.workers);
    DeskConfig cfg = DeskConfig::for_budget(a.budget);
    if (!a.config.empty() || !a.sets.empty()) {
        json flat = a.config.empty() ? json(cfg) : read_json(a.config);
        apply_overrides(flat, a.sets);
        json base = cfg;
        base.merge_patch(unflatten(flat));
        cfg = base.get<DeskConfig>();
    }
    cfg.seed = a.seed;
    const fs::path dir = run_dir(a.out, "reproduce", a.name.empty() ? "seed" + std::to_string(a.seed) : a.name);
    write_json(dir / "config.json", {{"command", "reproduce"}, {"budget_minutes", a.budget}, {"desk", cfg},
                                     {"out", dir.string()}});
    const Report rep = reproduce_all(cfg, dir);
    for (const auto& c : rep.criteria) std::cout << format_line(c) << '\n';
    const auto failed = rep.failed_ids();
    if (failed.empty()) return 0;
    std::cerr << "failing criteria:";
    for (int id : failed) std::cerr << ' ' << id;
    std::cerr << '\n';
    return kExitCriteria;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent reasoning with training-time scaffolding, desk scale"};
    app.require_subcommand(1);

    BuildDataArgs bd;
    auto* build = app.add_subcommand("build-data", "generate a synthetic dataset through the teacher and gate");
    build->add_option("--n", bd.n, "samples");
    build->add_option("--seed", bd.seed, "seed");
    build->add_option("--teacher", bd.teacher, "mock | http")->check(CLI::IsMember({"mock", "http"}));
    build->add_option("--faults", bd.faults, "fault spec, e.g. leak:1@0.5,malformed:2");
    build->add_option("--host", bd.host, "http teacher host");
    build->add_option("--port", bd.port, "http teacher port");
    build->add_option("--path", bd.path, "http teacher endpoint");
    build->add_option("--config", bd.config, "dataset config JSON");
    build->add_option("--out", bd.out, "output directory");
    build->add_option("--name", bd.name, "run name under the output root");

    RoiArgs ra;
    auto* roi = app.add_subcommand("extract-roi", "extract ROI features and metrics for a dataset");
    roi->add_option("--data", ra.data, "dataset directory")->required();
    roi->add_option("--T", ra.T, "area threshold");
    roi->add_option("--P", ra.P, "crop margin ratio");
    roi->add_flag("--grid-search", ra.grid_search, "also sweep T x P");
    roi->add_option("--T-set", ra.T_set, "thresholds for the grid search")->delimiter(',');
    roi->add_option("--P-set", ra.P_set, "margins for the grid search")->delimiter(',');
    roi->add_option("--out", ra.out, "output directory");
    roi->add_option("--name", ra.name, "run name under the output root");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "run a curriculum and save checkpoints");
    train->add_option("--strategy", ta.strategy, "3phase | 2phase | fullmix | reverse")
        ->check(CLI::IsMember({"3phase", "2phase", "fullmix", "reverse"}));
    train->add_option("--config", ta.config, "flat JSON config");
    train->add_option("--set", ta.sets, "key=value override (repeatable)");
    train->add_option("--data", ta.data, "dataset directory")->required();
    train->add_option("--split", ta.split, "train | test | all");
    train->add_flag("--full-epochs", ta.full_epochs, "use the full-scale epoch counts");
    train->add_option("--out", ta.out, "output directory");
    train->add_option("--name", ta.name, "run name under the output root");
    train->add_option("--workers", ta.workers, "worker count");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "score a checkpoint");
    eval->add_option("--metric", ea.metric, "acc | f1 | sim | latency | heatmap")
        ->check(CLI::IsMember({"acc", "f1", "sim", "latency", "heatmap"}));
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval->add_option("--data", ea.data, "dataset directory")->required();
    eval->add_option("--split", ea.split, "train | test | all");
    eval->add_option("--K", ea.K, "latent steps (-1: each question's own chain length)");
    eval->add_option("--max-len", ea.max_len, "answer token cap");
    eval->add_option("--sample", ea.sample, "sample id for heatmaps");
    eval->add_option("--reps", ea.reps, "latency repetitions");
    eval->add_option("--warmup", ea.warmup, "latency warmup runs");
    eval->add_option("--answer-len", ea.answer_len, "fixed decode length for latency");
    eval->add_option("--out", ea.out, "output directory");
    eval->add_option("--name", ea.name, "run name under the output root");
    eval->add_option("--workers", ea.workers, "worker count");

    EvalArgs ia;
    auto* interp = app.add_subcommand("interpret", "per-step heatmaps of one sample");
    interp->add_option("--checkpoint", ia.checkpoint, "training checkpoint (with scaffolding)")->required();
    interp->add_option("--data", ia.data, "dataset directory")->required();
    interp->add_option("--sample", ia.sample, "sample id");
    interp->add_option("--K", ia.K, "latent steps");
    interp->add_option("--out", ia.out, "output directory");
    interp->add_option("--name", ia.name, "run name under the output root");

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "latency against K");
    bench->add_option("--k", ba.k_list, "comma-separated K values");
    bench->add_option("--checkpoint", ba.checkpoint, "checkpoint (default: fresh desk model)");
    bench->add_option("--data", ba.data, "dataset directory (default: 20 mock samples)");
    bench->add_option("--reps", ba.reps, "repetitions");
    bench->add_option("--warmup", ba.warmup, "warmup runs");
    bench->add_option("--answer-len", ba.answer_len, "fixed decode length");
    bench->add_option("--seed", ba.seed, "seed for the mock samples");
    bench->add_option("--out", ba.out, "output directory");
    bench->add_option("--name", ba.name, "run name under the output root");
    bench->add_option("--workers", ba.workers, "worker count");

    GridArgs ga;
    auto* grid = app.add_subcommand("gridsearch", "sweep the loss weights");
    grid->add_option("--lambda-text", ga.lambda_text, "semantic weights")->delimiter(',');
    grid->add_option("--lambda-visual", ga.lambda_visual, "visual weights")->delimiter(',');
    grid->add_option("--data", ga.data, "dataset directory")->required();
    grid->add_option("--config", ga.config, "flat JSON config");
    grid->add_option("--set", ga.sets, "key=value override (repeatable)");
    grid->add_option("--strategy", ga.strategy, "curriculum")->check(CLI::IsMember({"3phase", "2phase", "fullmix", "reverse"}));
    grid->add_option("--eval-K", ga.eval_K, "evaluation K (-1: own chain length)");
    grid->add_option("--out", ga.out, "output directory");
    grid->add_option("--name", ga.name, "run name under the output root");
    grid->add_option("--workers", ga.workers, "worker count");

    ReproduceArgs pa;
    auto* repro = app.add_subcommand("reproduce", "seeded end-to-end run graded against the acceptance criteria");
    repro->add_option("--budget", pa.budget, "wall-clock budget in minutes");
    repro->add_option("--seed", pa.seed, "seed");
    repro->add_option("--config", pa.config, "flat JSON desk config");
    repro->add_option("--set", pa.sets, "key=value override (repeatable)");
    repro->add_option("--out", pa.out, "output directory");
    repro->add_option("--name", pa.name, "run name under the output root");
    repro->add_option("--workers", pa.workers, "worker count");

    if (argc <= 1) {
        std::cerr << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*build) return cmd_build_data(bd);
        if (*roi) return cmd_extract_roi(ra);
        if (*train) return cmd_train(ta);
        if (*eval) return cmd_eval(ea);
        if (*interp) return cmd_interpret(ia);
        if (*bench) return cmd_bench(ba);
        if (*grid) return cmd_gridsearch(ga);
        if (*repro) return cmd_reproduce(pa);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.error_class());
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "filesystem error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << app.help();
    return kExitUsage;
}
