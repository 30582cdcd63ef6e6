#include "vital/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vital/vocab.hpp"

namespace vital {

double SimilarityMatrix::mean_off_diagonal() const {
    if (K < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < K; ++i)
        for (std::size_t j = 0; j < K; ++j)
            if (i != j) sum += at(i, j);
    return sum / static_cast<double>(K * (K - 1));
}

SimilarityMatrix trace_similarity(const std::vector<Tensor>& states) {
    SimilarityMatrix m;
    m.K = states.size();
    m.S.assign(m.K * m.K, 0.0);
    m.samples = 1;
    std::vector<double> norms;
    for (const auto& s : states) {
        const double n = l2_norm(s.values());
        if (n == 0.0) throw DegenerateVectorError("zero-norm latent state");
        norms.push_back(n);
    }
    for (std::size_t i = 0; i < m.K; ++i) {
        m.S[i * m.K + i] = 1.0;
        for (std::size_t j = i + 1; j < m.K; ++j) {
            double dot = 0.0;
            const auto a = states[i].values(), b = states[j].values();
            for (std::size_t t = 0; t < a.size(); ++t) dot += a[t] * b[t];
            const double c = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
            m.S[i * m.K + j] = m.S[j * m.K + i] = c;
        }
    }
    return m;
}

SimilarityMatrix average_similarity(const std::vector<std::vector<Tensor>>& traces) {
    SimilarityMatrix out;
    for (const auto& t : traces) {
        SimilarityMatrix m;
        try {
            m = trace_similarity(t);
        } catch (const DegenerateVectorError&) {
            ++out.excluded;
            continue;
        }
        if (out.samples == 0) {
            out.K = m.K;
            out.S.assign(m.S.size(), 0.0);
        } else if (m.K != out.K) {
            throw ShapeError("traces of different depth");
        }
        for (std::size_t i = 0; i < m.S.size(); ++i) out.S[i] += m.S[i];
        ++out.samples;
    }
    if (out.samples == 0) throw DataError("no usable traces for the similarity matrix");
    for (double& v : out.S) v /= static_cast<double>(out.samples);
    return out;
}

SimilarityMatrix interstep_similarity(const Model& model, const std::vector<FiveTuple>& data, int K) {
    if (K < 2) throw ArgumentError("inter-step similarity needs K >= 2");
    if (data.empty()) throw DataError("empty evaluation set");
    std::vector<std::vector<Tensor>> traces;
    for (const auto& s : data) {
        auto res = run_full_inference(model, s.image, s.question_tokens, K, 0);
        std::vector<Tensor> states;
        for (const auto& z : res.trace.states) states.push_back(z.value());
        traces.push_back(std::move(states));
    }
    return average_similarity(traces);
}

namespace {

std::vector<std::string> lower_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) {
        for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(w);
    }
    return out;
}

}  // namespace

double token_f1(const std::string& prediction, const std::string& gold) {
    const auto p = lower_tokens(prediction), g = lower_tokens(gold);
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> bag;
    for (const auto& w : g) ++bag[w];
    int common = 0;
    for (const auto& w : p) {
        auto it = bag.find(w);
        if (it != bag.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    // 2PR / (P + R) with P = c/|p| and R = c/|g| reduces to 2c / (|p| + |g|),
    // which rounds once.
    return 2.0 * static_cast<double>(common) / static_cast<double>(p.size() + g.size());
}

std::string normalize_for_match(const std::string& s) {
    std::string out;
    for (const auto& w : lower_tokens(s)) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
    if (predictions.size() != golds.size())
        throw ArgumentError("accuracy over " + std::to_string(predictions.size()) + " predictions and " +
                            std::to_string(golds.size()) + " references");
    if (predictions.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        hits += normalize_for_match(predictions[i]) == normalize_for_match(golds[i]);
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::string predict_answer(const Model& model, const FiveTuple& sample, int K, std::size_t max_len) {
    auto res = run_full_inference(model, sample.image, sample.question_tokens, K < 0 ? sample.K : K, max_len);
    return Vocabulary::standard().decode(res.answer);
}

std::vector<std::string> predict_answers(const Model& model, const std::vector<FiveTuple>& data, int K,
                                         std::size_t max_len) {
    std::vector<std::string> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(predict_answer(model, s, K, max_len));
    return out;
}

double closed_ended_accuracy(const Model& model, const std::vector<FiveTuple>& data, int K, std::size_t max_len) {
    std::vector<std::string> preds, golds;
    for (const auto& s : data) {
        if (!s.closed_ended()) continue;
        preds.push_back(predict_answer(model, s, K, max_len));
        golds.push_back(s.answer);
    }
    if (preds.empty()) throw DataError("no closed-ended samples to evaluate");
    return accuracy(preds, golds);
}

double mean_token_f1(const Model& model, const std::vector<FiveTuple>& data, int K, std::size_t max_len) {
    if (data.empty()) throw DataError("empty evaluation set");
    double sum = 0.0;
    for (const auto& s : data) sum += token_f1(predict_answer(model, s, K, max_len), s.answer);
    return sum / static_cast<double>(data.size());
}

double LatencyTable::max_relative_deviation() const {
    double worst = 0.0;
    for (const auto& r : rows)
        if (r.K >= 1 && slope_ms > 0.0) worst = std::max(worst, std::abs(r.per_step_ms / slope_ms - 1.0));
    return worst;
}

namespace {

// The deployed inference path with a forced answer length.
void timed_inference(const Backbone& bb, const FiveTuple& s, int K, std::size_t answer_len) {
    NoGradGuard ng;
    const RunMode eval{};
    PrefixEncoding prefix = bb.encode_prefix(s.image, s.question_tokens, eval);
    auto [trace, cache] = latent_loop(bb, prefix, K, eval);
    Var h = trace.depth() ? trace.states.back() : prefix.z0;
    for (std::size_t t = 0; t < answer_len; ++t) {
        const Tensor row = bb.logits(h).value();
        int tok = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i] > row[static_cast<std::size_t>(tok)]) tok = static_cast<int>(i);
        if (t + 1 == answer_len) break;
        const int ids[1] = {tok};
        h = bb.forward_step(bb.embed(ids), cache, eval);
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

LatencyTable latency_bench(const Model& model, const std::vector<FiveTuple>& samples, const std::vector<int>& K_values,
                           const LatencyOptions& opts) {
    if (samples.empty()) throw DataError("latency bench needs at least one sample");
    if (K_values.empty()) throw ArgumentError("no K values to benchmark");
    const Backbone& bb = model.backbone();
    using clock = std::chrono::steady_clock;
    std::map<int, std::vector<double>> times;
    for (std::size_t rep = 0; rep < opts.warmup + opts.repetitions; ++rep) {
        const FiveTuple& s = samples[rep % samples.size()];
        for (int K : K_values) {
            const auto t0 = clock::now();
            timed_inference(bb, s, K, opts.answer_len);
            const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            if (rep >= opts.warmup) times[K].push_back(ms);
        }
    }
    LatencyTable table;
    for (int K : K_values) table.rows.push_back({K, median(times[K]), 0.0});
    double base = 0.0;
    bool has_base = false;
    for (const auto& r : table.rows)
        if (r.K == 0) {
            base = r.median_ms;
            has_base = true;
        }
    // Least-squares slope of median against K.
    double mk = 0.0, mt = 0.0;
    for (const auto& r : table.rows) {
        mk += r.K;
        mt += r.median_ms;
    }
    mk /= static_cast<double>(table.rows.size());
    mt /= static_cast<double>(table.rows.size());
    double num = 0.0, den = 0.0;
    for (const auto& r : table.rows) {
        num += (r.K - mk) * (r.median_ms - mt);
        den += (r.K - mk) * (r.K - mk);
    }
    table.slope_ms = den > 0.0 ? num / den : 0.0;
    for (auto& r : table.rows)
        if (r.K > 0) r.per_step_ms = has_base ? (r.median_ms - base) / r.K : table.slope_ms;
    return table;
}

void write_latency_csv(const std::filesystem::path& path, const LatencyTable& table) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "K,median_ms,per_step_ms\n";
    f.precision(8);
    for (const auto& r : table.rows) f << r.K << ',' << r.median_ms << ',' << r.per_step_ms << '\n';
    f << "# slope_ms," << table.slope_ms << '\n';
}

bool HeatmapEvolution::final_argmax_in_gt() const {
    return !argmax.empty() && gt_cells[argmax.back()] != 0;
}

HeatmapEvolution heatmap_evolution(const Model& model, const ToyEncoder& encoder, const FiveTuple& sample, int K) {
    const Scaffolding& sc = model.scaffolding();
    if (K < 1) throw ArgumentError("heatmap evolution needs K >= 1");
    const PatchFeatureMap patches = encoder.encode(sample.image, "full");
    HeatmapEvolution out;
    out.grid = patches.grid;
    out.gt_cells = downsample_mask(sample.mask, patches.grid).cells;
    NoGradGuard ng;
    const RunMode eval{};
    const Backbone& bb = model.backbone();
    PrefixEncoding prefix = bb.encode_prefix(sample.image, sample.question_tokens, eval);
    auto [trace, cache] = latent_loop(bb, prefix, K, eval);
    for (const auto& z : trace.states) {
        Tensor map = sc.heatmap(z, patches.features);
        std::size_t best = 0;
        for (std::size_t i = 1; i < map.size(); ++i)
            if (map[i] > map[best]) best = i;
        out.argmax.push_back(best);
        out.maps.push_back(std::move(map));
    }
    return out;
}

void write_heatmaps(const std::filesystem::path& dir, const HeatmapEvolution& h) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "heatmap.csv");
    if (!csv) throw DataError("cannot write heatmaps under " + dir.string());
    csv << "step,row,col,value,gt\n";
    csv.precision(8);
    for (std::size_t k = 0; k < h.maps.size(); ++k) {
        std::vector<double> gray;
        for (std::size_t i = 0; i < h.maps[k].size(); ++i) {
            gray.push_back((h.maps[k][i] + 1.0) / 2.0);
            csv << k + 1 << ',' << i / h.grid << ',' << i % h.grid << ',' << h.maps[k][i] << ','
                << static_cast<int>(h.gt_cells[i]) << '\n';
        }
        write_pgm(dir / ("step_" + std::to_string(k + 1) + ".pgm"), h.grid, h.grid, gray);
    }
    std::vector<double> gt(h.gt_cells.begin(), h.gt_cells.end());
    write_pgm(dir / "gt_mask.pgm", h.grid, h.grid, gt);
}

}  // namespace vital
