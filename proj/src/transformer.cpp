#include "vital/transformer.hpp"

#include <cmath>

namespace vital {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Tensor t(rows, cols);
    for (auto& v : t.values()) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
    Var v = Var::leaf(std::move(init), trainable);
    params_.emplace(name, v);
    return v;
}

const Var& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
}

std::vector<Var> ParamStore::trainable() const {
    std::vector<Var> out;
    for (const auto& [name, v] : params_)
        if (v.requires_grad()) out.push_back(v);
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, v] : params_)
        if (v.requires_grad()) out.push_back(name);
    return out;
}

std::size_t ParamStore::count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_)
        if (!trainable_only || v.requires_grad()) n += v.value().size();
    return n;
}

std::size_t ParamStore::count_in_namespace(const std::string& ns) const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_)
        if (namespace_of(name) == ns) n += v.value().size();
    return n;
}

std::string ParamStore::namespace_of(const std::string& name) {
    return name.substr(0, name.find('.'));
}

std::size_t KVCache::layer_length(std::size_t layer) const {
    std::size_t n = 0;
    for (const auto& k : keys_[layer]) n += k.rows();
    return n;
}

void KVCache::append(std::size_t layer, Var k, Var v) {
    if (k.rows() != v.rows()) throw ShapeError("cache key/value row mismatch");
    keys_[layer].push_back(std::move(k));
    values_[layer].push_back(std::move(v));
}

void KVCache::advance(std::size_t rows) {
    length_ += rows;
    for (std::size_t l = 0; l < keys_.size(); ++l)
        if (layer_length(l) != length_) throw ShapeError("cache layers out of step");
}

KVCache KVCache::detached() const {
    KVCache out(keys_.size());
    for (std::size_t l = 0; l < keys_.size(); ++l) {
        for (const auto& k : keys_[l]) out.keys_[l].push_back(Var::constant(k.value()));
        for (const auto& v : values_[l]) out.values_[l].push_back(Var::constant(v.value()));
    }
    out.length_ = length_;
    return out;
}

Var lora_apply(const LoraAdapter* adapter, const Var& base_weight, const Var& x, const RunMode& mode) {
    Var y = ops::linear(x, base_weight);
    if (!adapter) return y;
    if (adapter->a.cols() != x.cols() || adapter->b.rows() != base_weight.rows() ||
        adapter->a.rows() != adapter->b.cols())
        throw ShapeError("lora adapter shape does not match its base weight");
    Var xin = x;
    if (mode.train && adapter->dropout > 0.0) {
        if (!mode.rng) throw ArgumentError("train-mode dropout needs an rng");
        xin = ops::dropout(x, adapter->dropout, *mode.rng);
    }
    Var delta = ops::linear(ops::linear(xin, adapter->a), adapter->b);
    return ops::add(y, ops::scale(delta, adapter->scaling));
}

TransformerStack::TransformerStack(const std::string& prefix, const TransformerShape& shape, ParamStore& store,
                                   Rng& init, bool trainable, const std::optional<LoraSpec>& lora,
                                   const std::string& lora_prefix)
    : shape_(shape), lora_(lora) {
    if (shape.n_heads == 0 || shape.d % shape.n_heads != 0) throw ConfigError("hidden dim must divide into heads");
    if ((shape.d / shape.n_heads) % 2 != 0) throw ConfigError("head dim must be even for rotary positions");
    if (lora && lora->rank < 1) throw ConfigError("lora rank must be >= 1");
    const std::size_t d = shape.d, ff = shape.d_ff;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sff = 1.0 / std::sqrt(static_cast<double>(ff));

    auto make_adapter = [&](const std::string& name, std::size_t out, std::size_t in) {
        LoraAdapter ad;
        ad.a = store.add(lora_prefix + name + ".A",
                         random_matrix(lora->rank, in, 1.0 / std::sqrt(static_cast<double>(in)), init), true);
        ad.b = store.add(lora_prefix + name + ".B", Tensor(out, lora->rank), true);
        ad.scaling = lora->alpha / static_cast<double>(lora->rank);
        ad.dropout = lora->dropout;
        return ad;
    };

    for (std::size_t l = 0; l < shape.n_layers; ++l) {
        const std::string p = prefix + "layers." + std::to_string(l) + ".";
        Layer L;
        L.ln1_g = store.add(p + "ln1.gain", Tensor(1, d, 1.0), trainable);
        L.ln1_b = store.add(p + "ln1.bias", Tensor(1, d), trainable);
        L.wq = store.add(p + "attn.wq", random_matrix(d, d, sd, init), trainable);
        L.wk = store.add(p + "attn.wk", random_matrix(d, d, sd, init), trainable);
        L.wv = store.add(p + "attn.wv", random_matrix(d, d, sd, init), trainable);
        L.wo = store.add(p + "attn.wo", random_matrix(d, d, sd, init), trainable);
        L.ln2_g = store.add(p + "ln2.gain", Tensor(1, d, 1.0), trainable);
        L.ln2_b = store.add(p + "ln2.bias", Tensor(1, d), trainable);
        L.w1 = store.add(p + "ffn.w1", random_matrix(ff, d, sd, init), trainable);
        L.w2 = store.add(p + "ffn.w2", random_matrix(d, ff, sff, init), trainable);
        if (lora) {
            const std::string lp = "layers." + std::to_string(l) + ".";
            L.lq = make_adapter(lp + "attn.wq", d, d);
            L.lk = make_adapter(lp + "attn.wk", d, d);
            L.lv = make_adapter(lp + "attn.wv", d, d);
            L.lo = make_adapter(lp + "attn.wo", d, d);
            L.l1 = make_adapter(lp + "ffn.w1", ff, d);
            L.l2 = make_adapter(lp + "ffn.w2", d, ff);
        }
        layers_.push_back(std::move(L));
    }
    final_g_ = store.add(prefix + "final_norm.gain", Tensor(1, d, 1.0), trainable);
    final_b_ = store.add(prefix + "final_norm.bias", Tensor(1, d), trainable);
}

Var TransformerStack::forward(const Var& x, KVCache& cache, const RunMode& mode) const {
    if (x.cols() != shape_.d) throw ShapeError("transformer input width " + std::to_string(x.cols()));
    if (cache.n_layers() != layers_.size()) throw ShapeError("cache layer count mismatch");
    const std::size_t pos0 = cache.length();
    const std::size_t H = shape_.n_heads;
    auto ad = [](const std::optional<LoraAdapter>& a) { return a ? &*a : nullptr; };
    Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& L = layers_[l];
        Var n1 = ops::layer_norm(h, L.ln1_g, L.ln1_b);
        Var q = ops::rope(lora_apply(ad(L.lq), L.wq, n1, mode), H, pos0);
        Var k = ops::rope(lora_apply(ad(L.lk), L.wk, n1, mode), H, pos0);
        Var v = lora_apply(ad(L.lv), L.wv, n1, mode);
        cache.append(l, k, v);
        Var att = ops::attention(q, cache.keys(l), cache.values(l), H, pos0);
        h = ops::add(h, lora_apply(ad(L.lo), L.wo, att, mode));
        Var n2 = ops::layer_norm(h, L.ln2_g, L.ln2_b);
        Var f = lora_apply(ad(L.l2), L.w2, ops::gelu(lora_apply(ad(L.l1), L.w1, n2, mode)), mode);
        h = ops::add(h, f);
    }
    cache.advance(x.rows());
    return ops::layer_norm(h, final_g_, final_b_);
}

std::size_t TransformerStack::analytic_lora_count() const {
    if (!lora_) return 0;
    const std::size_t r = lora_->rank, d = shape_.d, ff = shape_.d_ff;
    // q, k, v, o are d→d; w1 is d→ff; w2 is ff→d.
    return layers_.size() * (4 * r * (d + d) + r * (d + ff) + r * (ff + d));
}

std::vector<const LoraAdapter*> TransformerStack::adapters() const {
    std::vector<const LoraAdapter*> out;
    for (const auto& L : layers_)
        for (const auto* a : {&L.lq, &L.lk, &L.lv, &L.lo, &L.l1, &L.l2})
            if (*a) out.push_back(&**a);
    return out;
}

}  // namespace vital
