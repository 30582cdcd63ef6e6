#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vital/autograd.hpp"
#include "vital/ops.hpp"
#include "vital/rng.hpp"

namespace vital {

// Named parameters. The text before the first '.' is the namespace
// ("backbone", "lora", "scaffold"); checkpoints group records by it.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init, bool trainable);
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Var>& all() const noexcept { return params_; }

    std::vector<Var> trainable() const;
    std::vector<std::string> trainable_names() const;
    std::size_t count(bool trainable_only) const;
    std::size_t count_in_namespace(const std::string& ns) const;

    static std::string namespace_of(const std::string& name);

private:
    std::map<std::string, Var> params_;
};

// Per-layer key/value blocks. Blocks are graph nodes, so gradients flow back
// through cached positions into whatever produced them.
class KVCache {
public:
    KVCache() = default;
    explicit KVCache(std::size_t n_layers) : keys_(n_layers), values_(n_layers) {}

    std::size_t length() const noexcept { return length_; }
    std::size_t n_layers() const noexcept { return keys_.size(); }
    const std::vector<Var>& keys(std::size_t layer) const { return keys_[layer]; }
    const std::vector<Var>& values(std::size_t layer) const { return values_[layer]; }
    std::size_t layer_length(std::size_t layer) const;

    void append(std::size_t layer, Var k, Var v);
    // Called once every layer has received the block for `rows` new positions.
    void advance(std::size_t rows);
    // Forget the graph history but keep the cached values.
    KVCache detached() const;

private:
    std::vector<std::vector<Var>> keys_;
    std::vector<std::vector<Var>> values_;
    std::size_t length_ = 0;
};

struct RunMode {
    bool train = false;  // enables dropout
    Rng* rng = nullptr;
};

// Low-rank delta on a frozen weight: W x + (alpha/r) B (A dropout(x)).
struct LoraAdapter {
    Var a;  // r × d_in
    Var b;  // d_out × r, zero at init
    double scaling = 1.0;
    double dropout = 0.0;
};

Var lora_apply(const LoraAdapter* adapter, const Var& base_weight, const Var& x, const RunMode& mode);

struct TransformerShape {
    std::size_t d = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
};

struct LoraSpec {
    std::size_t rank = 8;
    double alpha = 16.0;
    double dropout = 0.05;
};

// Pre-norm decoder stack with rotary positions. Used by the backbone (frozen
// base + adapters) and by the auxiliary text decoder (fully trainable).
class TransformerStack {
public:
    TransformerStack(const std::string& prefix, const TransformerShape& shape, ParamStore& store, Rng& init,
                     bool trainable, const std::optional<LoraSpec>& lora, const std::string& lora_prefix);

    // Runs rows of `x` at positions cache.length() .. and appends their keys
    // and values; returns the final-norm hidden states.
    Var forward(const Var& x, KVCache& cache, const RunMode& mode) const;

    const TransformerShape& shape() const noexcept { return shape_; }
    // Trainable adapter entries, analytically: sum over adapted matrices of r(d_in + d_out).
    std::size_t analytic_lora_count() const;
    std::vector<const LoraAdapter*> adapters() const;

private:
    struct Layer {
        Var ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, w2;
        std::optional<LoraAdapter> lq, lk, lv, lo, l1, l2;
    };

    TransformerShape shape_;
    std::vector<Layer> layers_;
    Var final_g_, final_b_;
    std::optional<LoraSpec> lora_;
};

}  // namespace vital
