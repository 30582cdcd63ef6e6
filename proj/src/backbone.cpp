#include "vital/backbone.hpp"

#include <cmath>

#include "vital/vocab.hpp"

namespace vital {

void BackboneConfig::validate() const {
    if (d == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0) throw ConfigError("backbone dims must be positive");
    if (d % n_heads != 0) throw ConfigError("d must be divisible by the head count");
    if (lora_rank < 1) throw ConfigError("lora rank must be >= 1");
    if (patch_grid == 0 || image_size % patch_grid != 0) throw ConfigError("image size must be divisible by patch grid");
    if (lora_dropout < 0.0 || lora_dropout >= 1.0) throw ConfigError("lora dropout must be in [0, 1)");
    if (visual_tokens() >= max_positions) throw ConfigError("visual tokens exceed max positions");
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
    j = nlohmann::json{{"d", c.d},
                       {"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"d_ff", c.d_ff},
                       {"vocab_size", c.vocab_size},
                       {"max_positions", c.max_positions},
                       {"image_size", c.image_size},
                       {"patch_grid", c.patch_grid},
                       {"lora_rank", c.lora_rank},
                       {"lora_alpha", c.lora_alpha},
                       {"lora_dropout", c.lora_dropout},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
    BackboneConfig def;
    c.d = j.value("d", def.d);
    c.n_layers = j.value("n_layers", def.n_layers);
    c.n_heads = j.value("n_heads", def.n_heads);
    c.d_ff = j.value("d_ff", def.d_ff);
    c.vocab_size = j.value("vocab_size", def.vocab_size);
    c.max_positions = j.value("max_positions", def.max_positions);
    c.image_size = j.value("image_size", def.image_size);
    c.patch_grid = j.value("patch_grid", def.patch_grid);
    c.lora_rank = j.value("lora_rank", def.lora_rank);
    c.lora_alpha = j.value("lora_alpha", def.lora_alpha);
    c.lora_dropout = j.value("lora_dropout", def.lora_dropout);
    c.seed = j.value("seed", def.seed);
}

namespace {

BackboneConfig resolved(BackboneConfig c) {
    if (c.vocab_size == 0) c.vocab_size = Vocabulary::standard().size();
    c.validate();
    return c;
}

Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
    Tensor t(rows, cols);
    for (auto& v : t.values()) v = rng.normal(0.0, sd);
    return t;
}

}  // namespace

Backbone::Backbone(BackboneConfig cfg)
    : cfg_(resolved(cfg)),
      init_(derive_seed(cfg_.seed, 0xBAC0)),
      stack_("backbone.", TransformerShape{cfg_.d, cfg_.n_layers, cfg_.n_heads, cfg_.d_ff}, store_, init_, false,
             LoraSpec{cfg_.lora_rank, cfg_.lora_alpha, cfg_.lora_dropout}, "lora.") {
    patch_w_ = store_.add("backbone.patch_embed.weight", patch_projection(), false);
    patch_b_ = store_.add("backbone.patch_embed.bias", gaussian(1, cfg_.d, 0.2, init_), false);
    patch_pos_ = store_.add("backbone.patch_pos", gaussian(cfg_.visual_tokens(), cfg_.d, 0.5, init_), false);
    tok_embed_ = store_.add("backbone.tok_embed", gaussian(cfg_.vocab_size, cfg_.d, 1.0, init_), false);
    lm_head_ = store_.add("backbone.lm_head", gaussian(cfg_.vocab_size, cfg_.d, 1.0 / std::sqrt(static_cast<double>(cfg_.d)), init_), false);
}

Tensor Backbone::patch_projection() {
    const std::size_t ps = cfg_.image_size / cfg_.patch_grid;
    // Frozen random projection, constant over 2x2 pixel blocks when the patch allows.
    const std::size_t blk = ps % 2 == 0 ? 2 : 1;
    const std::size_t nb = ps / blk;
    const double gain = 8.0;
    Tensor R = gaussian(cfg_.d, nb * nb, gain / static_cast<double>(nb), init_);
    Tensor W(cfg_.d, ps * ps);
    for (std::size_t o = 0; o < cfg_.d; ++o)
        for (std::size_t r = 0; r < ps; ++r)
            for (std::size_t c = 0; c < ps; ++c)
                W.at(o, r * ps + c) = R.at(o, (r / blk) * nb + c / blk) / static_cast<double>(blk);
    return W;
}

Var Backbone::visual_tokens(const ToyImage& image) const {
    if (image.size != cfg_.image_size) throw ShapeError("image size " + std::to_string(image.size) + " != configured " + std::to_string(cfg_.image_size));
    const std::size_t g = cfg_.patch_grid, ps = cfg_.image_size / g;
    Tensor patches(g * g, ps * ps);
    for (std::size_t pr = 0; pr < g; ++pr)
        for (std::size_t pc = 0; pc < g; ++pc)
            for (std::size_t r = 0; r < ps; ++r)
                for (std::size_t c = 0; c < ps; ++c)
                    patches.at(pr * g + pc, r * ps + c) = image.at(pr * ps + r, pc * ps + c) - 0.5;
    Var tokens = ops::add_row(ops::linear(Var::constant(std::move(patches)), patch_w_), patch_b_);
    return ops::add(tokens, patch_pos_);
}

Var Backbone::embed(std::span<const int> ids) const { return ops::embedding(tok_embed_, ids); }

Var Backbone::logits(const Var& hidden) const { return ops::linear(hidden, lm_head_); }

PrefixEncoding Backbone::encode_prefix(const ToyImage& image, std::span<const int> question, const RunMode& mode) const {
    const std::size_t total = cfg_.visual_tokens() + question.size();
    if (total > cfg_.max_positions)
        throw LengthError("prefix of " + std::to_string(total) + " positions exceeds max " + std::to_string(cfg_.max_positions));
    std::vector<Var> parts{visual_tokens(image)};
    if (!question.empty()) parts.push_back(embed(question));
    Var x = ops::concat_rows(parts);
    PrefixEncoding enc{Var(), new_cache(), Var()};
    enc.hidden = stack_.forward(x, enc.cache, mode);
    enc.z0 = ops::slice_rows(enc.hidden, enc.hidden.rows() - 1, 1);
    return enc;
}

Var Backbone::forward_rows(const Var& rows, KVCache& cache, const RunMode& mode) const {
    if (cache.length() + rows.rows() > cfg_.max_positions)
        throw LengthError("cache overflow: " + std::to_string(cache.length()) + " + " + std::to_string(rows.rows()) +
                          " > " + std::to_string(cfg_.max_positions));
    if (!rows.value().all_finite()) throw NumericalError("non-finite input to forward step");
    return stack_.forward(rows, cache, mode);
}

Var Backbone::forward_step(const Var& input, KVCache& cache, const RunMode& mode) const {
    if (input.rows() != 1 || input.cols() != cfg_.d) throw ShapeError("forward_step takes a 1 x d vector");
    return forward_rows(input, cache, mode);
}

std::vector<int> Backbone::decode_answer(KVCache& cache, const Var& z_last, std::size_t max_len) const {
    NoGradGuard ng;
    std::vector<int> out;
    if (max_len == 0) return out;
    auto argmax = [](const Tensor& row) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i] > row[best]) best = i;
        return static_cast<int>(best);
    };
    int tok = argmax(logits(z_last).value());
    const RunMode eval{};
    while (tok != Vocabulary::kEos) {
        out.push_back(tok);
        if (out.size() >= max_len || cache.length() >= cfg_.max_positions) break;
        const int ids[1] = {tok};
        Var h = forward_step(embed(ids), cache, eval);
        tok = argmax(logits(h).value());
    }
    return out;
}

}  // namespace vital
