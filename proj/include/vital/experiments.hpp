#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/diagnostics.hpp"
#include "vital/training.hpp"

namespace vital {

// Everything a desk-scale experiment needs; all randomness derives from `seed`.
struct DeskConfig {
    std::uint64_t seed = 7;
    std::size_t n_train = 1500;
    std::size_t n_eval = 400;   // held-out closed-ended questions
    std::size_t n_probe = 100;  // held-out mixed questions for similarity and heatmaps
    BackboneConfig backbone;
    ScaffoldConfig scaffold;
    TrainConfig train;
    CurriculumStrategy strategy = CurriculumStrategy::three_phase;
    CurriculumEpochs epochs;
    int eval_K = -1;  // < 0: each question runs its own chain length
    int similarity_K = 4;
    std::vector<int> k_ablation{0, 2, 4};
    LatencyOptions latency;

    // Scales the sample counts and epochs down to fit a wall-clock budget.
    static DeskConfig for_budget(double minutes);
};

void to_json(nlohmann::json& j, const DeskConfig& c);
void from_json(const nlohmann::json& j, DeskConfig& c);

struct DeskData {
    std::vector<FiveTuple> train;
    std::vector<FiveTuple> eval;
    std::vector<FiveTuple> probe;
};

// Mock-teacher datasets: train with the default question mix, eval with the
// closed-ended types only, probe with the default mix. Disjoint seeds.
DeskData build_desk_data(const DeskConfig& cfg);

struct Variant {
    std::string name;
    double lambda_text = 0.0;
    double lambda_visual = 0.0;
    VisualTargetMode visual_mode = VisualTargetMode::shared;
    int fixed_K = -1;
};

// Task-only, +semantic, +visual and dual supervision.
std::vector<Variant> ablation_variants();

struct VariantResult {
    Variant variant;
    double accuracy = 0.0;
    double similarity = 0.0;  // mean off-diagonal inter-step similarity on the probe set
    double final_loss = 0.0;
    double seconds = 0.0;     // wall clock; excluded from determinism comparisons
    std::string checkpoint_digest;
};

void to_json(nlohmann::json& j, const VariantResult& r);

// Trains a fresh model for the variant and evaluates it. Fixed-K variants are
// evaluated at that K, the rest at cfg.eval_K.
VariantResult run_variant(const DeskConfig& cfg, const DeskData& data, const Variant& v, Model* out = nullptr);

// FNV-1a over the serialized checkpoint, hex.
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace vital
