#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/transformer.hpp"

namespace vital {

// Visual projector variants: (a) linear, (b) MLP, (c) MLP + LayerNorm,
// (d) residual MLP + LayerNorm (default).
enum class ProjectorVariant { linear, mlp, mlp_ln, residual_mlp_ln };

enum class VisualTargetMode { shared, per_step };

std::string to_string(ProjectorVariant v);
ProjectorVariant projector_variant_from_string(const std::string& s);
std::string to_string(VisualTargetMode m);
VisualTargetMode visual_target_mode_from_string(const std::string& s);

struct ScaffoldConfig {
    std::size_t d_dec = 32;
    std::size_t dec_layers = 2;
    std::size_t dec_heads = 4;
    std::size_t dec_ff = 64;
    std::size_t max_chain_tokens = 32;
    std::size_t d_v = 16;
    double vp_dropout = 0.1;
    ProjectorVariant vp_variant = ProjectorVariant::residual_mlp_ln;
    // Residual operand: LN(z) by default; raw z when set.
    bool vp_raw_residual = false;
    std::uint64_t seed = 4321;

    bool operator==(const ScaffoldConfig&) const = default;
};

void to_json(nlohmann::json& j, const ScaffoldConfig& c);
void from_json(const nlohmann::json& j, ScaffoldConfig& c);

// z_1..z_K from the recurrent loop.
struct LatentTrace {
    std::vector<Var> states;  // each 1 × d
    bool training_path = false;

    std::size_t depth() const noexcept { return states.size(); }
};

// Ground-truth text per latent step, as token ids (without end token).
struct ReasoningChain {
    std::vector<std::vector<int>> steps;
    std::size_t depth() const noexcept { return steps.size(); }
};

// Interpolation weights toward the ROI feature for the per-step target variant;
// K = 4 gives {0.0, 0.33, 0.67, 1.0}.
std::vector<double> per_step_alphas(std::size_t K);

// Training-time scaffolding under the "scaffold." namespace: pj_in, the
// auxiliary text decoder (own embeddings, tied head, no sharing with the
// backbone) and the visual projector.
class Scaffolding {
public:
    Scaffolding(const ScaffoldConfig& cfg, std::size_t d_model, std::size_t vocab_size);

    const ScaffoldConfig& config() const noexcept { return cfg_; }
    ParamStore& params() noexcept { return store_; }
    const ParamStore& params() const noexcept { return store_; }

    Var pj_in(const Var& z) const;
    Var visual_project(const Var& z, const RunMode& mode) const;

    // Mean over steps of next-token CE on [pj_in(z_k); Embed(e_k)] → e_k <eos>.
    // Position 0 (the projected latent) is never a target.
    Var semantic_loss(const LatentTrace& trace, const ReasoningChain& chain, const RunMode& mode) const;
    // Mean over steps of the per-dimension L1 between VP(z_k) and the target.
    Var visual_loss(const LatentTrace& trace, const Tensor& f_roi, VisualTargetMode target_mode,
                    const Tensor* f_global, const RunMode& mode) const;

    // Greedy decode of the auxiliary decoder from pj_in(z) until <eos>.
    std::vector<int> decode_text(const Var& z, std::size_t max_len) const;
    // Cosine similarity between VP(z) and every patch feature (rows).
    Tensor heatmap(const Var& z, const Tensor& patch_features) const;

    // Number of scaffolding calls so far; the inference path asserts it does
    // not move.
    std::size_t use_count() const noexcept { return uses_; }

private:
    Var decoder_logits(const Var& z, std::span<const int> tokens, const RunMode& mode) const;

    ScaffoldConfig cfg_;
    std::size_t d_model_;
    ParamStore store_;
    Rng init_;
    Var pj_w_, pj_b_;
    Var dec_embed_;
    TransformerStack decoder_;
    Var vp_ln_in_g_, vp_ln_in_b_, vp_w1_, vp_w2_, vp_ln_out_g_, vp_ln_out_b_;
    mutable std::size_t uses_ = 0;
};

}  // namespace vital
