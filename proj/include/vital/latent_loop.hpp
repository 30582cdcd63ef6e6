#pragma once

#include <span>
#include <vector>

#include "vital/backbone.hpp"
#include "vital/model.hpp"
#include "vital/scaffolding.hpp"

namespace vital {

struct LatentLoopResult {
    LatentTrace trace;
    KVCache cache;  // prefix + K latent positions
};

// z_k = f(z_{k-1}; cache), fed back as the next input embedding. The trainer
// and inference both call `latent_loop`; there is no second implementation.
struct LatentLoop {
    LatentLoopResult operator()(const Backbone& backbone, const PrefixEncoding& prefix, int K,
                                const RunMode& mode) const;
};

inline constexpr LatentLoop latent_loop{};

struct InferenceResult {
    std::vector<int> answer;
    LatentTrace trace;
};

// encode_prefix -> latent loop -> greedy answer decode, under no-grad and with
// dropout off. Throws ContaminationError if any scaffolding call happens.
InferenceResult run_full_inference(const Model& model, const ToyImage& image, std::span<const int> question, int K,
                                   std::size_t max_answer_len);

}  // namespace vital
