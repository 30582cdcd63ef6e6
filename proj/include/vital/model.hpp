#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vital/backbone.hpp"
#include "vital/checkpoint.hpp"
#include "vital/scaffolding.hpp"

namespace vital {

// Backbone + adapters, optionally with training scaffolding attached.
class Model {
public:
    Model(const BackboneConfig& backbone, const std::optional<ScaffoldConfig>& scaffold);

    // Restores whatever namespaces the checkpoint holds.
    static Model from_checkpoint(const Checkpoint& ckpt);
    // Deployment entry point: refuses checkpoints that still carry scaffolding.
    static Model load_deployed(const Checkpoint& ckpt);

    Checkpoint to_checkpoint() const;
    void load_values(const Checkpoint& ckpt);

    Backbone& backbone() noexcept { return *backbone_; }
    const Backbone& backbone() const noexcept { return *backbone_; }
    bool has_scaffolding() const noexcept { return static_cast<bool>(scaffold_); }
    Scaffolding& scaffolding();
    const Scaffolding& scaffolding() const;
    void drop_scaffolding() { scaffold_.reset(); }

    // Adapters, then scaffolding, in name order.
    std::vector<Var> trainable() const;
    std::vector<std::string> trainable_names() const;
    std::vector<std::pair<std::string, Var>> all_params() const;

private:
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<Scaffolding> scaffold_;
};

}  // namespace vital
