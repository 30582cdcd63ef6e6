#include "vital/latent_loop.hpp"

#include <string>

namespace vital {

LatentLoopResult LatentLoop::operator()(const Backbone& backbone, const PrefixEncoding& prefix, int K,
                                        const RunMode& mode) const {
    if (K < 0) throw ArgumentError("latent depth must be non-negative, got " + std::to_string(K));
    LatentLoopResult out{LatentTrace{{}, mode.train}, prefix.cache};
    const std::size_t start = out.cache.length();
    Var z = prefix.z0;
    for (int k = 0; k < K; ++k) {
        z = backbone.forward_step(z, out.cache, mode);
        if (!z.value().all_finite())
            throw NumericalError("non-finite latent state at step " + std::to_string(k + 1));
        out.trace.states.push_back(z);
    }
    if (out.cache.length() != start + static_cast<std::size_t>(K))
        throw Error(ErrorClass::internal, "latent loop grew the cache by the wrong amount");
    return out;
}

InferenceResult run_full_inference(const Model& model, const ToyImage& image, std::span<const int> question, int K,
                                   std::size_t max_answer_len) {
    const std::size_t uses_before = model.has_scaffolding() ? model.scaffolding().use_count() : 0;
    NoGradGuard ng;
    const RunMode eval{};
    const Backbone& bb = model.backbone();
    PrefixEncoding prefix = bb.encode_prefix(image, question, eval);
    auto [trace, cache] = latent_loop(bb, prefix, K, eval);
    const Var& last = trace.depth() ? trace.states.back() : prefix.z0;
    InferenceResult out{bb.decode_answer(cache, last, max_answer_len), std::move(trace)};
    if (model.has_scaffolding() && model.scaffolding().use_count() != uses_before)
        throw ContaminationError("scaffolding was touched on the inference path");
    return out;
}

}  // namespace vital
