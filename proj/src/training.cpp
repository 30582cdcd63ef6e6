#include "vital/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "vital/diagnostics.hpp"
#include "vital/vocab.hpp"

namespace vital {

void TrainConfig::validate() const {
    if (!(lambda_text >= 0.0) || !(lambda_visual >= 0.0)) throw ConfigError("loss weights must be nonnegative");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1]");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (fixed_K > 64) throw ConfigError("fixed_K is unreasonably large");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lambda_text", c.lambda_text},
         {"lambda_visual", c.lambda_visual},
         {"lr", c.lr},
         {"warmup_ratio", c.warmup_ratio},
         {"weight_decay", c.weight_decay},
         {"max_grad_norm", c.max_grad_norm},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"visual_mode", to_string(c.visual_mode)},
         {"fixed_K", c.fixed_K},
         {"max_answer_len", c.max_answer_len}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("lambda_text", c.lambda_text);
    opt("lambda_visual", c.lambda_visual);
    opt("lr", c.lr);
    opt("warmup_ratio", c.warmup_ratio);
    opt("weight_decay", c.weight_decay);
    opt("max_grad_norm", c.max_grad_norm);
    opt("batch_size", c.batch_size);
    opt("seed", c.seed);
    opt("fixed_K", c.fixed_K);
    opt("max_answer_len", c.max_answer_len);
    if (j.contains("visual_mode")) c.visual_mode = visual_target_mode_from_string(j.at("visual_mode").get<std::string>());
    c.validate();
}

const LatentLoop& training_latent_loop() { return latent_loop; }

int effective_K(const FiveTuple& sample, const TrainConfig& cfg) {
    return cfg.fixed_K >= 0 ? cfg.fixed_K : sample.K;
}

LossBreakdown sample_loss(const Model& model, const FiveTuple& sample, const TrainConfig& cfg, const RunMode& mode) {
    const Backbone& bb = model.backbone();
    const int K = effective_K(sample, cfg);
    PrefixEncoding prefix = bb.encode_prefix(sample.image, sample.question_tokens, mode);
    auto [trace, cache] = training_latent_loop()(bb, prefix, K, mode);
    const Var& last = trace.depth() ? trace.states.back() : prefix.z0;

    // Task: head(z_K) predicts the first answer token; teacher-forced answer
    // rows predict the rest and the end token.
    std::vector<int> targets(sample.answer_tokens.begin(), sample.answer_tokens.end());
    targets.push_back(Vocabulary::kEos);
    std::vector<Var> logit_parts{bb.logits(last)};
    if (!sample.answer_tokens.empty()) {
        Var rows = bb.forward_rows(bb.embed(sample.answer_tokens), cache, mode);
        logit_parts.push_back(bb.logits(rows));
    }
    const std::vector<char> mask(targets.size(), 1);
    Var task = ops::cross_entropy(ops::concat_rows(logit_parts), targets, mask);

    LossBreakdown out;
    out.task = task.value()[0];
    std::vector<Var> terms{task};
    const bool needs_scaffold = (cfg.lambda_text > 0.0 || cfg.lambda_visual > 0.0) && trace.depth() > 0;
    if (needs_scaffold) {
        const Scaffolding& sc = model.scaffolding();
        const std::size_t supervised = std::min(trace.depth(), sample.chain.depth());
        if (cfg.lambda_text > 0.0 && supervised > 0) {
            LatentTrace sub{{trace.states.begin(), trace.states.begin() + static_cast<std::ptrdiff_t>(supervised)},
                            trace.training_path};
            ReasoningChain chain{{sample.chain.steps.begin(),
                                  sample.chain.steps.begin() + static_cast<std::ptrdiff_t>(supervised)}};
            Var text = sc.semantic_loss(sub, chain, mode);
            out.text = text.value()[0];
            terms.push_back(ops::scale(text, cfg.lambda_text));
        }
        if (cfg.lambda_visual > 0.0) {
            Var vis = sc.visual_loss(trace, sample.roi.feature, cfg.visual_mode, &sample.roi.global, mode);
            out.visual = vis.value()[0];
            terms.push_back(ops::scale(vis, cfg.lambda_visual));
        }
    }
    out.total = terms.size() == 1 ? task : ops::sum(terms);
    return out;
}

LossBreakdown compute_joint_loss(const Model& model, const std::vector<const FiveTuple*>& batch,
                                 const TrainConfig& cfg, const RunMode& mode) {
    if (batch.empty()) throw EmptyLossError("empty batch");
    LossBreakdown out;
    std::vector<Var> totals;
    for (const FiveTuple* s : batch) {
        LossBreakdown b = sample_loss(model, *s, cfg, mode);
        out.task += b.task;
        out.text += b.text;
        out.visual += b.visual;
        totals.push_back(b.total);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.task *= inv;
    out.text *= inv;
    out.visual *= inv;
    out.total = ops::scale(ops::sum(totals), inv);
    return out;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<std::vector<const FiveTuple*>> make_batches(const std::vector<const FiveTuple*>& data, std::size_t batch_size,
                                                        const TrainConfig& cfg, Rng& rng) {
    std::map<int, std::vector<const FiveTuple*>> by_K;
    for (const FiveTuple* s : data) by_K[effective_K(*s, cfg)].push_back(s);
    std::vector<std::vector<const FiveTuple*>> batches;
    for (auto& [K, group] : by_K) {
        shuffle(group, rng);
        for (std::size_t i = 0; i < group.size(); i += batch_size)
            batches.emplace_back(group.begin() + static_cast<std::ptrdiff_t>(i),
                                 group.begin() + static_cast<std::ptrdiff_t>(std::min(group.size(), i + batch_size)));
    }
    shuffle(batches, rng);
    return batches;
}

PhaseResult train_phase(Model& model, const CurriculumPhase& phase, const std::vector<FiveTuple>& data,
                        const TrainConfig& cfg) {
    cfg.validate();
    PhaseResult res;
    res.phase = phase;
    std::vector<const FiveTuple*> admitted;
    for (const auto& s : data)
        if (phase.admits(s.K)) admitted.push_back(&s);
    res.samples = admitted.size();

    std::vector<Var> params = model.trainable();
    AdamWConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.max_grad_norm = cfg.max_grad_norm;
    ocfg.warmup_ratio = cfg.warmup_ratio;

    Rng rng(derive_seed(cfg.seed, 0x7A11, static_cast<std::uint64_t>(phase.id)));
    std::vector<std::vector<std::vector<const FiveTuple*>>> schedule;
    std::size_t total_steps = 0;
    for (std::size_t e = 0; e < phase.epochs; ++e) {
        schedule.push_back(make_batches(admitted, cfg.batch_size, cfg, rng));
        total_steps += schedule.back().size();
    }
    ocfg.total_steps = std::max<std::size_t>(1, total_steps);
    AdamW opt(ocfg, params);
    Rng dropout_rng(derive_seed(cfg.seed, 0xD409, static_cast<std::uint64_t>(phase.id)));
    const RunMode mode{true, &dropout_rng};

    std::size_t step = 0;
    for (std::size_t e = 0; e < schedule.size() && !res.aborted; ++e) {
        double epoch_sum = 0.0;
        std::size_t epoch_batches = 0;
        for (const auto& batch : schedule[e]) {
            zero_grads(params);
            LossBreakdown loss;
            try {
                loss = compute_joint_loss(model, batch, cfg, mode);
            } catch (const NumericalError& err) {
                res.aborted = true;
                res.abort_reason = err.what();
                break;
            }
            const double total = loss.total.value()[0];
            if (!std::isfinite(total)) {
                res.aborted = true;
                res.abort_reason = "non-finite loss at step " + std::to_string(step);
                break;
            }
            backward(loss.total);
            double gnorm = 0.0;
            try {
                gnorm = opt.step(params);
            } catch (const NumericalError& err) {
                res.aborted = true;
                res.abort_reason = err.what();
                break;
            }
            res.log.push_back({phase.id, step, e, loss.task, loss.text, loss.visual, total, gnorm});
            epoch_sum += total;
            ++epoch_batches;
            ++step;
        }
        if (epoch_batches) res.epoch_mean_total.push_back(epoch_sum / static_cast<double>(epoch_batches));
    }
    zero_grads(params);
    res.checkpoint = model.to_checkpoint();
    return res;
}

std::string to_string(CurriculumStrategy s) {
    switch (s) {
        case CurriculumStrategy::three_phase: return "3phase";
        case CurriculumStrategy::two_phase: return "2phase";
        case CurriculumStrategy::fullmix: return "fullmix";
        case CurriculumStrategy::reverse: return "reverse";
    }
    return "?";
}

CurriculumStrategy curriculum_strategy_from_string(const std::string& s) {
    for (auto v : {CurriculumStrategy::three_phase, CurriculumStrategy::two_phase, CurriculumStrategy::fullmix,
                   CurriculumStrategy::reverse})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown curriculum strategy: " + s);
}

std::vector<CurriculumPhase> curriculum_phases(CurriculumStrategy s, const CurriculumEpochs& ep) {
    constexpr int kMax = 64;
    switch (s) {
        case CurriculumStrategy::three_phase:
            return {{1, 0, 1, ep.phase1}, {2, 0, 2, ep.phase2}, {3, 0, kMax, ep.phase3}};
        case CurriculumStrategy::two_phase:
            return {{1, 0, 2, ep.phase1 + ep.phase2}, {2, 0, kMax, ep.phase3}};
        case CurriculumStrategy::fullmix:
            return {{1, 0, kMax, ep.phase1 + ep.phase2 + ep.phase3}};
        case CurriculumStrategy::reverse:
            return {{1, 4, kMax, ep.phase1}, {2, 3, kMax, ep.phase2}, {3, 0, kMax, ep.phase3}};
    }
    return {};
}

CurriculumResult run_curriculum(Model& model, CurriculumStrategy strategy, const std::vector<FiveTuple>& data,
                                const TrainConfig& cfg, const CurriculumEpochs& epochs) {
    CurriculumResult out;
    for (const auto& phase : curriculum_phases(strategy, epochs)) {
        if (!out.phases.empty()) model.load_values(out.phases.back().checkpoint);
        out.phases.push_back(train_phase(model, phase, data, cfg));
        if (out.phases.back().aborted)
            throw NumericalError("phase " + std::to_string(phase.id) + " aborted: " + out.phases.back().abort_reason);
    }
    return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<PhaseResult>& phases) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "phase,step,epoch,task,text,visual,total,grad_norm\n";
    f.precision(10);
    for (const auto& p : phases)
        for (const auto& s : p.log)
            f << s.phase << ',' << s.step << ',' << s.epoch << ',' << s.task << ',' << s.text << ',' << s.visual << ','
              << s.total << ',' << s.grad_norm << '\n';
}

double train_and_evaluate(const std::vector<FiveTuple>& train, const std::vector<FiveTuple>& eval,
                          const SweepSetup& setup, Model* out_model) {
    Model model(setup.backbone, setup.scaffold);
    run_curriculum(model, setup.strategy, train, setup.train, setup.epochs);
    const double acc = closed_ended_accuracy(model, eval, setup.eval_K, setup.train.max_answer_len);
    if (out_model) *out_model = std::move(model);
    return acc;
}

std::vector<SweepCell> sweep_loss_weights(std::vector<double> lambda_text_set, std::vector<double> lambda_visual_set,
                                          const std::vector<FiveTuple>& train, const std::vector<FiveTuple>& eval,
                                          const SweepSetup& setup) {
    if (std::find(lambda_text_set.begin(), lambda_text_set.end(), 1.0) == lambda_text_set.end())
        lambda_text_set.push_back(1.0);
    if (std::find(lambda_visual_set.begin(), lambda_visual_set.end(), 0.1) == lambda_visual_set.end())
        lambda_visual_set.push_back(0.1);
    std::vector<SweepCell> cells;
    for (double l1 : lambda_text_set) {
        for (double l2 : lambda_visual_set) {
            SweepCell cell{l1, l2, 0.0, false, {}};
            SweepSetup s = setup;
            s.train.lambda_text = l1;
            s.train.lambda_visual = l2;
            try {
                cell.accuracy = train_and_evaluate(train, eval, s);
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
            cells.push_back(cell);
        }
    }
    return cells;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "lambda_text,lambda_visual,accuracy,status\n";
    for (const auto& c : cells)
        f << c.lambda_text << ',' << c.lambda_visual << ',' << c.accuracy << ',' << (c.failed ? "failed" : "ok") << '\n';
}

}  // namespace vital
