#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/image.hpp"
#include "vital/transformer.hpp"

namespace vital {

struct BackboneConfig {
    std::size_t d = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 0;  // 0 = size of the standard vocabulary
    std::size_t max_positions = 64;
    std::size_t image_size = 32;  // G
    std::size_t patch_grid = 4;   // g; the image becomes g² visual tokens
    std::size_t lora_rank = 8;
    double lora_alpha = 16.0;
    double lora_dropout = 0.05;
    std::uint64_t seed = 1234;

    std::size_t patch_pixels() const { return (image_size / patch_grid) * (image_size / patch_grid); }
    std::size_t visual_tokens() const { return patch_grid * patch_grid; }
    void validate() const;
    bool operator==(const BackboneConfig&) const = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

// Output of the full causal pass over [visual tokens; question tokens].
struct PrefixEncoding {
    Var hidden;  // P × d, final-norm hidden states
    KVCache cache;
    Var z0;  // 1 × d, the last prefix position
};

// Desk-scale multimodal decoder. Base weights live under "backbone." and are
// frozen; low-rank adapters live under "lora." and are the only trainable part.
class Backbone {
public:
    explicit Backbone(BackboneConfig cfg);

    const BackboneConfig& config() const noexcept { return cfg_; }
    ParamStore& params() noexcept { return store_; }
    const ParamStore& params() const noexcept { return store_; }
    const TransformerStack& stack() const noexcept { return stack_; }

    KVCache new_cache() const { return KVCache(cfg_.n_layers); }
    // Linear embedding of the g×g image patches (pixels centred at 0.5).
    Var visual_tokens(const ToyImage& image) const;
    Var embed(std::span<const int> ids) const;
    Var logits(const Var& hidden) const;

    PrefixEncoding encode_prefix(const ToyImage& image, std::span<const int> question, const RunMode& mode) const;
    // One position attending to the whole cache plus itself; appends to the cache.
    Var forward_step(const Var& input, KVCache& cache, const RunMode& mode) const;
    // Several positions at once (teacher-forced answer tokens).
    Var forward_rows(const Var& rows, KVCache& cache, const RunMode& mode) const;

    // First token from head(z_last); later tokens embed-then-step. Greedy.
    std::vector<int> decode_answer(KVCache& cache, const Var& z_last, std::size_t max_len) const;

    std::size_t analytic_lora_count() const { return stack_.analytic_lora_count(); }

private:
    BackboneConfig cfg_;
    ParamStore store_;
    Rng init_;
    TransformerStack stack_;
    Tensor patch_projection();

    Var patch_w_, patch_b_, patch_pos_, tok_embed_, lm_head_;
};

}  // namespace vital
