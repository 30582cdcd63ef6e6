#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/experiments.hpp"

namespace vital {

struct CriterionResult {
    CriterionResult() = default;
    CriterionResult(int id_, std::string name_) : id(id_), name(std::move(name_)) {}

    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    nlohmann::json metrics = nlohmann::json::object();  // seeded, repeatable numbers
    nlohmann::json timing = nlohmann::json::object();   // wall-clock numbers
};

void to_json(nlohmann::json& j, const CriterionResult& r);

// One line: "[PASS] 3 train-inference parity: ...".
std::string format_line(const CriterionResult& r);

CriterionResult check_gradient(std::uint64_t seed);
CriterionResult check_cache_equivalence(std::uint64_t seed);
CriterionResult check_parity(std::uint64_t seed);
CriterionResult check_plug_and_play(std::uint64_t seed);
CriterionResult check_roi_pipeline(std::uint64_t seed);
CriterionResult check_quality_gate(std::uint64_t seed);
CriterionResult check_metric_oracles();

// Trained-model criteria share one set of runs.
struct TrainedRuns {
    std::vector<VariantResult> ablation;    // task_only, semantic, visual, dual
    std::vector<VariantResult> k_ablation;  // one per fixed K
    std::optional<VariantResult> per_step;  // dual with per-step visual targets
    double heatmap_hit_rate = 0.0;          // final-step argmax inside the GT mask
    std::optional<Model> deployed;          // dual model after detach
};

TrainedRuns run_trained_experiments(const DeskConfig& cfg, const DeskData& data, bool with_per_step = true);

CriterionResult check_collapse_trend(const TrainedRuns& runs, double budget_minutes = 10.0);
CriterionResult check_ablation_order(const TrainedRuns& runs, double budget_minutes = 30.0);
CriterionResult check_k_direction(const TrainedRuns& runs, double budget_minutes = 30.0);
CriterionResult check_latency(const Model& deployed, const std::vector<FiveTuple>& samples, const LatencyOptions& opts);

struct Report {
    std::uint64_t seed = 0;
    DeskConfig config;
    std::vector<CriterionResult> criteria;
    nlohmann::json experiments = nlohmann::json::object();

    bool all_passed() const;
    std::vector<int> failed_ids() const;
    nlohmann::json to_json() const;
    // The report without wall-clock fields and without the timing-only verdict.
    nlohmann::json deterministic_view() const;
};

// Builds the seeded data, trains the variants, runs every diagnostic and
// grades criteria 1-11. Criterion 12 re-runs the data build and the task-only
// training and compares digests. Artifacts go under `out_dir` when non-empty.
Report reproduce_all(const DeskConfig& cfg, const std::filesystem::path& out_dir = {});

// Criterion 12 proper: two full reproduce_all runs compared on their
// deterministic views.
CriterionResult check_determinism(const DeskConfig& cfg);

}  // namespace vital
