#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/dataset.hpp"
#include "vital/latent_loop.hpp"
#include "vital/model.hpp"
#include "vital/optim.hpp"

namespace vital {

struct TrainConfig {
    double lambda_text = 1.0;
    double lambda_visual = 0.1;
    double lr = 3e-3;
    double warmup_ratio = 0.05;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0;
    std::size_t batch_size = 8;
    std::uint64_t seed = 17;
    VisualTargetMode visual_mode = VisualTargetMode::shared;
    // < 0: each sample runs K = its chain length. Otherwise every sample runs
    // this many latent steps; text supervision covers the first min(K, |chain|).
    int fixed_K = -1;
    std::size_t max_answer_len = 24;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// The latent loop the trainer unrolls. Inference uses the same object.
const LatentLoop& training_latent_loop();

struct LossBreakdown {
    Var total;
    double task = 0.0;
    double text = 0.0;
    double visual = 0.0;
};

// total = task + λ₁·text + λ₂·visual for one sample. The task term is CE over
// the answer tokens and the end token, the first predicted from z_K.
LossBreakdown sample_loss(const Model& model, const FiveTuple& sample, const TrainConfig& cfg, const RunMode& mode);
// Batch mean of sample_loss.
LossBreakdown compute_joint_loss(const Model& model, const std::vector<const FiveTuple*>& batch,
                                 const TrainConfig& cfg, const RunMode& mode);

int effective_K(const FiveTuple& sample, const TrainConfig& cfg);

struct CurriculumPhase {
    int id = 1;
    int min_K = 1;
    int max_K = 4;
    std::size_t epochs = 1;

    bool admits(int K) const { return K >= min_K && K <= max_K; }
};

struct StepLog {
    int phase = 0;
    std::size_t step = 0;
    std::size_t epoch = 0;
    double task = 0.0, text = 0.0, visual = 0.0, total = 0.0;
    double grad_norm = 0.0;
};

struct PhaseResult {
    CurriculumPhase phase;
    Checkpoint checkpoint;
    std::vector<StepLog> log;
    std::vector<double> epoch_mean_total;
    std::size_t samples = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Batches of equal K, shuffled within K groups and across batches per epoch.
std::vector<std::vector<const FiveTuple*>> make_batches(const std::vector<const FiveTuple*>& data, std::size_t batch_size,
                                                        const TrainConfig& cfg, Rng& rng);

// Trains the model in place on the samples the phase admits. A fresh
// optimizer per phase, so warmup restarts with each phase. A non-finite loss
// or gradient stops the phase and returns the last good parameters.
PhaseResult train_phase(Model& model, const CurriculumPhase& phase, const std::vector<FiveTuple>& data,
                        const TrainConfig& cfg);

enum class CurriculumStrategy { three_phase, two_phase, fullmix, reverse };
std::string to_string(CurriculumStrategy s);
CurriculumStrategy curriculum_strategy_from_string(const std::string& s);

struct CurriculumEpochs {
    std::size_t phase1 = 3;
    std::size_t phase2 = 3;
    std::size_t phase3 = 6;

    // Counts used at full scale.
    static CurriculumEpochs full() { return {5, 5, 10}; }
};

std::vector<CurriculumPhase> curriculum_phases(CurriculumStrategy s, const CurriculumEpochs& epochs);

struct CurriculumResult {
    std::vector<PhaseResult> phases;
};

// Runs each phase in order; phase n+1 warm-starts from phase n's checkpoint.
CurriculumResult run_curriculum(Model& model, CurriculumStrategy strategy, const std::vector<FiveTuple>& data,
                                const TrainConfig& cfg, const CurriculumEpochs& epochs = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<PhaseResult>& phases);

struct SweepCell {
    double lambda_text = 0.0;
    double lambda_visual = 0.0;
    double accuracy = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepSetup {
    BackboneConfig backbone;
    ScaffoldConfig scaffold;
    TrainConfig train;
    CurriculumStrategy strategy = CurriculumStrategy::three_phase;
    CurriculumEpochs epochs;
    int eval_K = -1;  // < 0: each sample's own K
};

// Trains one model per (λ₁, λ₂) and records closed-ended accuracy on `eval`.
// The default cell (1.0, 0.1) is always part of the grid.
std::vector<SweepCell> sweep_loss_weights(std::vector<double> lambda_text_set, std::vector<double> lambda_visual_set,
                                          const std::vector<FiveTuple>& train, const std::vector<FiveTuple>& eval,
                                          const SweepSetup& setup);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells);

// Fresh model + curriculum + closed-ended accuracy; the unit a sweep cell runs.
double train_and_evaluate(const std::vector<FiveTuple>& train, const std::vector<FiveTuple>& eval,
                          const SweepSetup& setup, Model* out_model = nullptr);

}  // namespace vital
