#include "vital/scaffolding.hpp"

#include <cmath>

#include "vital/vocab.hpp"

namespace vital {

std::string to_string(ProjectorVariant v) {
    switch (v) {
        case ProjectorVariant::linear: return "linear";
        case ProjectorVariant::mlp: return "mlp";
        case ProjectorVariant::mlp_ln: return "mlp_ln";
        case ProjectorVariant::residual_mlp_ln: return "residual_mlp_ln";
    }
    return "residual_mlp_ln";
}

ProjectorVariant projector_variant_from_string(const std::string& s) {
    if (s == "linear") return ProjectorVariant::linear;
    if (s == "mlp") return ProjectorVariant::mlp;
    if (s == "mlp_ln") return ProjectorVariant::mlp_ln;
    if (s == "residual_mlp_ln") return ProjectorVariant::residual_mlp_ln;
    throw ConfigError("unknown projector variant '" + s + "'");
}

std::string to_string(VisualTargetMode m) { return m == VisualTargetMode::shared ? "shared" : "per_step"; }

VisualTargetMode visual_target_mode_from_string(const std::string& s) {
    if (s == "shared") return VisualTargetMode::shared;
    if (s == "per_step") return VisualTargetMode::per_step;
    throw ConfigError("unknown visual target mode '" + s + "'");
}

void to_json(nlohmann::json& j, const ScaffoldConfig& c) {
    j = nlohmann::json{{"d_dec", c.d_dec},
                       {"dec_layers", c.dec_layers},
                       {"dec_heads", c.dec_heads},
                       {"dec_ff", c.dec_ff},
                       {"max_chain_tokens", c.max_chain_tokens},
                       {"d_v", c.d_v},
                       {"vp_dropout", c.vp_dropout},
                       {"vp_variant", to_string(c.vp_variant)},
                       {"vp_raw_residual", c.vp_raw_residual},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ScaffoldConfig& c) {
    ScaffoldConfig def;
    c.d_dec = j.value("d_dec", def.d_dec);
    c.dec_layers = j.value("dec_layers", def.dec_layers);
    c.dec_heads = j.value("dec_heads", def.dec_heads);
    c.dec_ff = j.value("dec_ff", def.dec_ff);
    c.max_chain_tokens = j.value("max_chain_tokens", def.max_chain_tokens);
    c.d_v = j.value("d_v", def.d_v);
    c.vp_dropout = j.value("vp_dropout", def.vp_dropout);
    c.vp_variant = projector_variant_from_string(j.value("vp_variant", to_string(def.vp_variant)));
    c.vp_raw_residual = j.value("vp_raw_residual", def.vp_raw_residual);
    c.seed = j.value("seed", def.seed);
}

std::vector<double> per_step_alphas(std::size_t K) {
    std::vector<double> a(K, 1.0);
    if (K <= 1) return a;
    for (std::size_t k = 0; k < K; ++k) {
        const double raw = static_cast<double>(k) / static_cast<double>(K - 1);
        a[k] = std::round(raw * 100.0) / 100.0;
    }
    return a;
}

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    Tensor t(rows, cols);
    for (auto& v : t.values()) v = rng.normal(0.0, sd);
    return t;
}

}  // namespace

Scaffolding::Scaffolding(const ScaffoldConfig& cfg, std::size_t d_model, std::size_t vocab_size)
    : cfg_(cfg),
      d_model_(d_model),
      init_(derive_seed(cfg.seed, 0x5CAF)),
      decoder_("scaffold.decoder.", TransformerShape{cfg.d_dec, cfg.dec_layers, cfg.dec_heads, cfg.dec_ff}, store_,
               init_, true, std::nullopt, "") {
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    pj_w_ = store_.add("scaffold.pj_in.weight", gaussian(cfg.d_dec, d_model, sd, init_), true);
    pj_b_ = store_.add("scaffold.pj_in.bias", Tensor(1, cfg.d_dec), true);
    dec_embed_ = store_.add("scaffold.decoder.tok_embed", gaussian(vocab_size, cfg.d_dec, 1.0, init_), true);
    vp_ln_in_g_ = store_.add("scaffold.vp.ln_in.gain", Tensor(1, d_model, 1.0), true);
    vp_ln_in_b_ = store_.add("scaffold.vp.ln_in.bias", Tensor(1, d_model), true);
    vp_w1_ = store_.add("scaffold.vp.w1", gaussian(d_model, d_model, sd, init_), true);
    vp_w2_ = store_.add("scaffold.vp.w2", gaussian(cfg.d_v, d_model, sd, init_), true);
    vp_ln_out_g_ = store_.add("scaffold.vp.ln_out.gain", Tensor(1, cfg.d_v, 1.0), true);
    vp_ln_out_b_ = store_.add("scaffold.vp.ln_out.bias", Tensor(1, cfg.d_v), true);
}

Var Scaffolding::pj_in(const Var& z) const {
    ++uses_;
    if (z.cols() != d_model_) throw ShapeError("pj_in input width");
    return ops::add_row(ops::linear(z, pj_w_), pj_b_);
}

Var Scaffolding::visual_project(const Var& z, const RunMode& mode) const {
    ++uses_;
    if (z.cols() != d_model_) throw ShapeError("visual projector input width");
    auto drop = [&](const Var& x) {
        if (mode.train && cfg_.vp_dropout > 0.0) {
            if (!mode.rng) throw ArgumentError("train-mode dropout needs an rng");
            return ops::dropout(x, cfg_.vp_dropout, *mode.rng);
        }
        return x;
    };
    switch (cfg_.vp_variant) {
        case ProjectorVariant::linear:
            return ops::linear(z, vp_w2_);
        case ProjectorVariant::mlp:
            return ops::linear(drop(ops::gelu(ops::linear(z, vp_w1_))), vp_w2_);
        case ProjectorVariant::mlp_ln: {
            Var zn = ops::layer_norm(z, vp_ln_in_g_, vp_ln_in_b_);
            Var h = drop(ops::gelu(ops::linear(zn, vp_w1_)));
            return ops::layer_norm(ops::linear(h, vp_w2_), vp_ln_out_g_, vp_ln_out_b_);
        }
        case ProjectorVariant::residual_mlp_ln: {
            Var zn = ops::layer_norm(z, vp_ln_in_g_, vp_ln_in_b_);
            Var h = drop(ops::gelu(ops::linear(zn, vp_w1_)));
            Var res = ops::add(h, cfg_.vp_raw_residual ? z : zn);
            return ops::layer_norm(ops::linear(res, vp_w2_), vp_ln_out_g_, vp_ln_out_b_);
        }
    }
    throw ConfigError("unhandled projector variant");
}

Var Scaffolding::decoder_logits(const Var& z, std::span<const int> tokens, const RunMode& mode) const {
    std::vector<Var> parts{pj_in(z)};
    if (!tokens.empty()) parts.push_back(ops::embedding(dec_embed_, tokens));
    KVCache cache(cfg_.dec_layers);
    Var h = decoder_.forward(ops::concat_rows(parts), cache, mode);
    return ops::linear(h, dec_embed_);
}

Var Scaffolding::semantic_loss(const LatentTrace& trace, const ReasoningChain& chain, const RunMode& mode) const {
    if (trace.depth() == 0) throw EmptyLossError("semantic loss with K = 0");
    if (trace.depth() != chain.depth())
        throw DataError("alignment error: trace has " + std::to_string(trace.depth()) + " states but chain has " +
                        std::to_string(chain.depth()) + " steps");
    std::vector<Var> per_step;
    for (std::size_t k = 0; k < trace.depth(); ++k) {
        const auto& step = chain.steps[k];
        if (step.size() + 1 > cfg_.max_chain_tokens)
            throw LengthError("reasoning step longer than " + std::to_string(cfg_.max_chain_tokens) + " tokens");
        Var logits = decoder_logits(trace.states[k], step, mode);
        std::vector<int> targets(step.begin(), step.end());
        targets.push_back(Vocabulary::kEos);
        std::vector<char> mask(targets.size(), 1);
        per_step.push_back(ops::cross_entropy(logits, targets, mask));
    }
    return ops::scale(ops::sum(per_step), 1.0 / static_cast<double>(per_step.size()));
}

Var Scaffolding::visual_loss(const LatentTrace& trace, const Tensor& f_roi, VisualTargetMode target_mode,
                             const Tensor* f_global, const RunMode& mode) const {
    if (trace.depth() == 0) throw EmptyLossError("visual loss with K = 0");
    if (f_roi.size() != cfg_.d_v) throw ShapeError("ROI feature width");
    auto check_unit = [](const Tensor& f, const char* what) {
        const double n = l2_norm(f.values());
        if (std::abs(n - 1.0) > 1e-6) throw DataError(std::string("target-norm error: ") + what + " norm " + std::to_string(n));
    };
    check_unit(f_roi, "f_ROI");
    std::vector<Tensor> targets(trace.depth(), f_roi);
    if (target_mode == VisualTargetMode::per_step) {
        if (!f_global) throw ArgumentError("per-step visual targets need a global feature");
        check_unit(*f_global, "f_global");
        const auto alphas = per_step_alphas(trace.depth());
        for (std::size_t k = 0; k < trace.depth(); ++k) {
            Tensor mix(1, cfg_.d_v);
            for (std::size_t i = 0; i < cfg_.d_v; ++i) mix[i] = alphas[k] * f_roi[i] + (1.0 - alphas[k]) * (*f_global)[i];
            targets[k] = kernels::l2_normalize(mix);
        }
    }
    std::vector<Var> per_step;
    for (std::size_t k = 0; k < trace.depth(); ++k)
        per_step.push_back(ops::l1_loss(visual_project(trace.states[k], mode), targets[k]));
    return ops::scale(ops::sum(per_step), 1.0 / static_cast<double>(per_step.size()));
}

std::vector<int> Scaffolding::decode_text(const Var& z, std::size_t max_len) const {
    NoGradGuard ng;
    std::vector<int> out;
    const RunMode eval{};
    while (out.size() < max_len && out.size() + 1 < cfg_.max_chain_tokens) {
        Var logits = decoder_logits(z, out, eval);
        const Tensor last = logits.value().row_copy(logits.rows() - 1);
        std::size_t best = 0;
        for (std::size_t i = 1; i < last.size(); ++i)
            if (last[i] > last[best]) best = i;
        if (static_cast<int>(best) == Vocabulary::kEos) break;
        out.push_back(static_cast<int>(best));
    }
    return out;
}

Tensor Scaffolding::heatmap(const Var& z, const Tensor& patch_features) const {
    NoGradGuard ng;
    if (patch_features.cols() != cfg_.d_v) throw ShapeError("patch feature width");
    const Tensor vp = visual_project(z, RunMode{}).value();
    Tensor out(1, patch_features.rows());
    for (std::size_t i = 0; i < patch_features.rows(); ++i) {
        const double nf = l2_norm(patch_features.row(i));
        const double nv = l2_norm(vp.values());
        out[i] = (nf == 0.0 || nv == 0.0) ? 0.0 : cosine_similarity(vp.values(), patch_features.row(i));
    }
    return out;
}

}  // namespace vital
