#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vital/dataset.hpp"
#include "vital/latent_loop.hpp"
#include "vital/model.hpp"
#include "vital/roi.hpp"

namespace vital {

struct SimilarityMatrix {
    std::size_t K = 0;
    std::vector<double> S;  // K × K, row-major
    std::size_t samples = 0;
    std::size_t excluded = 0;  // traces holding a zero-norm state

    double at(std::size_t i, std::size_t j) const { return S[i * K + j]; }
    double mean_off_diagonal() const;
};

// Pairwise cosine of the states of one trace; throws DegenerateVectorError on
// a zero-norm state.
SimilarityMatrix trace_similarity(const std::vector<Tensor>& states);
// Elementwise mean over samples of the per-trace matrices.
SimilarityMatrix interstep_similarity(const Model& model, const std::vector<FiveTuple>& data, int K);
SimilarityMatrix average_similarity(const std::vector<std::vector<Tensor>>& traces);

// Lowercased, whitespace-split multiset overlap. 0 when either side is empty.
double token_f1(const std::string& prediction, const std::string& gold);
// Lowercase and collapse whitespace.
std::string normalize_for_match(const std::string& s);
double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);

// Greedy answer through the deployed inference path.
std::string predict_answer(const Model& model, const FiveTuple& sample, int K, std::size_t max_len = 24);
// K < 0 runs each sample at its own chain length.
std::vector<std::string> predict_answers(const Model& model, const std::vector<FiveTuple>& data, int K,
                                         std::size_t max_len = 24);
// Exact-match accuracy over the yesno / identify / location_choice samples.
double closed_ended_accuracy(const Model& model, const std::vector<FiveTuple>& data, int K, std::size_t max_len = 24);
double mean_token_f1(const Model& model, const std::vector<FiveTuple>& data, int K, std::size_t max_len = 24);

struct LatencyRow {
    int K = 0;
    double median_ms = 0.0;
    double per_step_ms = 0.0;  // (median(K) - median(0)) / K; 0 for K = 0
};

struct LatencyTable {
    std::vector<LatencyRow> rows;
    double slope_ms = 0.0;  // least-squares fit of median against K
    // max over K ≥ 1 of |per_step / slope - 1|
    double max_relative_deviation() const;
};

struct LatencyOptions {
    std::size_t repetitions = 50;
    std::size_t warmup = 5;
    std::size_t answer_len = 8;  // fixed decode length, end token ignored
};

// Times prefix + latent loop + fixed-length decode; K values are interleaved
// per repetition so drift affects them alike.
LatencyTable latency_bench(const Model& model, const std::vector<FiveTuple>& samples, const std::vector<int>& K_values,
                           const LatencyOptions& opts = {});
void write_latency_csv(const std::filesystem::path& path, const LatencyTable& table);

struct HeatmapEvolution {
    std::size_t grid = 0;
    std::vector<Tensor> maps;     // one 1 × grid² map per latent step, values in [-1, 1]
    std::vector<char> gt_cells;   // ground-truth patch mask
    std::vector<std::size_t> argmax;

    bool final_argmax_in_gt() const;
};

// Per-step similarity of VP(z_k) against the full-image patch features.
HeatmapEvolution heatmap_evolution(const Model& model, const ToyEncoder& encoder, const FiveTuple& sample, int K);
// step_<k>.pgm, gt_mask.pgm and heatmap.csv (step, row, col, value, gt).
void write_heatmaps(const std::filesystem::path& dir, const HeatmapEvolution& h);

}  // namespace vital
