#include "vital/model.hpp"

#include "vital/vocab.hpp"

namespace vital {

Model::Model(const BackboneConfig& backbone, const std::optional<ScaffoldConfig>& scaffold)
    : backbone_(std::make_unique<Backbone>(backbone)) {
    if (scaffold)
        scaffold_ = std::make_unique<Scaffolding>(*scaffold, backbone_->config().d, backbone_->config().vocab_size);
}

Scaffolding& Model::scaffolding() {
    if (!scaffold_) throw DetachedError("model has no scaffolding attached");
    return *scaffold_;
}

const Scaffolding& Model::scaffolding() const {
    if (!scaffold_) throw DetachedError("model has no scaffolding attached");
    return *scaffold_;
}

std::vector<std::pair<std::string, Var>> Model::all_params() const {
    std::vector<std::pair<std::string, Var>> out(backbone_->params().all().begin(), backbone_->params().all().end());
    if (scaffold_) out.insert(out.end(), scaffold_->params().all().begin(), scaffold_->params().all().end());
    return out;
}

std::vector<Var> Model::trainable() const {
    std::vector<Var> out;
    for (const auto& [name, v] : all_params())
        if (v.requires_grad()) out.push_back(v);
    return out;
}

std::vector<std::string> Model::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, v] : all_params())
        if (v.requires_grad()) out.push_back(name);
    return out;
}

Checkpoint Model::to_checkpoint() const {
    Checkpoint ck;
    ck.header["format"] = "vital-checkpoint";
    ck.header["backbone"] = backbone_->config();
    if (scaffold_) ck.header["scaffold"] = scaffold_->config();
    for (const auto& [name, v] : all_params()) ck.tensors.emplace(name, v.value());
    return ck;
}

void Model::load_values(const Checkpoint& ckpt) {
    std::size_t matched = 0;
    for (auto& [name, v] : all_params()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw DataError("checkpoint is missing parameter " + name);
        if (!it->second.same_shape(v.value()))
            throw DataError("checkpoint shape mismatch for " + name + ": " + it->second.shape_str() + " vs " +
                            v.value().shape_str());
        Var handle = v;
        handle.mutable_value() = it->second;
        ++matched;
    }
    if (matched != ckpt.tensors.size()) throw DataError("checkpoint holds parameters this model does not define");
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.header.contains("backbone")) throw DataError("checkpoint header lacks a backbone config");
    const auto bcfg = ckpt.header["backbone"].get<BackboneConfig>();
    std::optional<ScaffoldConfig> scfg;
    if (ckpt.header.contains("scaffold")) scfg = ckpt.header["scaffold"].get<ScaffoldConfig>();
    Model m(bcfg, scfg);
    m.load_values(ckpt);
    return m;
}

Model Model::load_deployed(const Checkpoint& ckpt) {
    if (ckpt.has_namespace(Checkpoint::kScaffoldNamespace) || ckpt.header.contains("scaffold"))
        throw ContaminationError("deployed checkpoint still contains the scaffold namespace");
    return from_checkpoint(ckpt);
}

}  // namespace vital
