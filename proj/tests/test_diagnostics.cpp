#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vital/diagnostics.hpp"

using namespace vital;

namespace {

Tensor row(std::initializer_list<double> v) {
    Tensor t(1, v.size());
    std::size_t i = 0;
    for (double x : v) t[i++] = x;
    return t;
}

BackboneConfig tiny_backbone() {
    BackboneConfig c;
    c.d = 16;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 32;
    c.lora_rank = 2;
    return c;
}

ScaffoldConfig tiny_scaffold() {
    ScaffoldConfig s;
    s.d_dec = 8;
    s.dec_layers = 1;
    s.dec_heads = 2;
    s.dec_ff = 16;
    return s;
}

const std::vector<FiveTuple>& small_set() {
    static const std::vector<FiveTuple> data = [] {
        DatasetConfig dc;
        dc.n = 12;
        dc.seed = 9;
        MockTeacher teacher;
        return build_samples(dc, teacher).accepted;
    }();
    return data;
}

}  // namespace

TEST_CASE("token_f1 hand-computed examples") {
    CHECK(token_f1("the liver", "the liver") == 1.0);
    CHECK(token_f1("spleen", "liver") == 0.0);
    CHECK(token_f1("the liver", "liver") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(token_f1("liver", "the liver") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(token_f1("", "liver") == 0.0);
    CHECK(token_f1("liver", "   ") == 0.0);
    CHECK(token_f1("", "") == 0.0);
    // Bag semantics: order is irrelevant, multiplicity is not.
    CHECK(token_f1("liver the", "the liver") == 1.0);
    // P = 1/2 (one "the" of two matches), R = 1/1.
    CHECK(token_f1("the the", "the") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(token_f1("The  LIVER", "the liver") == 1.0);
    // P = 2/4, R = 2/3 -> F1 = 4/7.
    CHECK(token_f1("a b c d", "a b e") == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("accuracy hand-computed examples") {
    CHECK(accuracy({"Yes.", "No."}, {"Yes.", "No."}) == 1.0);
    CHECK(accuracy({"Yes."}, {"yes."}) == 1.0);
    CHECK(accuracy({"yes.", "no."}, {"yes.", "yes."}) == 0.5);
    CHECK(accuracy({"  the   Liver. "}, {"the liver."}) == 1.0);
    CHECK(accuracy({"liver"}, {"liver."}) == 0.0);
    CHECK(accuracy({}, {}) == 0.0);
    CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}), ArgumentError);
    CHECK(normalize_for_match("  A \t B\nC ") == "a b c");
}

TEST_CASE("similarity: copies give all ones, orthogonal traces give the identity") {
    std::vector<Tensor> same(4, row({0.3, -1.0, 2.0}));
    auto ones = trace_similarity(same);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(ones.at(i, j) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ones.mean_off_diagonal() == doctest::Approx(1.0));

    auto eye = trace_similarity({row({2, 0, 0}), row({0, -3, 0}), row({0, 0, 0.5})});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(eye.at(i, j) == (i == j ? 1.0 : 0.0));
    CHECK(eye.mean_off_diagonal() == 0.0);

    // Hand value: cos between (1,0) and (1,1) is 1/sqrt(2).
    auto two = trace_similarity({row({1, 0}), row({1, 1})});
    CHECK(two.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(trace_similarity({row({1, 0}), row({0, 0})}), DegenerateVectorError);
}

TEST_CASE("similarity averaging: mean of one, exclusion count, depth mismatch") {
    std::vector<Tensor> a{row({1, 0}), row({1, 1})};
    auto single = average_similarity({a});
    CHECK(single.S == trace_similarity(a).S);
    CHECK(single.samples == 1);

    std::vector<Tensor> b{row({1, 0}), row({0, 1})};
    std::vector<Tensor> zero{row({0, 0}), row({1, 0})};
    auto avg = average_similarity({a, b, zero});
    CHECK(avg.samples == 2);
    CHECK(avg.excluded == 1);
    CHECK(avg.at(0, 1) == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(average_similarity({a, {row({1, 0}), row({0, 1}), row({1, 1})}}), ShapeError);
    CHECK_THROWS_AS(average_similarity({zero}), DataError);
}

TEST_CASE("interstep similarity of a model is a valid similarity matrix") {
    Model m(tiny_backbone(), std::nullopt);
    auto S = interstep_similarity(m, small_set(), 4);
    REQUIRE(S.K == 4);
    CHECK(S.samples == small_set().size());
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(S.at(i, i) == doctest::Approx(1.0).epsilon(1e-6));
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(S.at(i, j) == S.at(j, i));
            CHECK(S.at(i, j) >= -1.0);
            CHECK(S.at(i, j) <= 1.0);
        }
    }
    CHECK_THROWS_AS(interstep_similarity(m, small_set(), 1), ArgumentError);
    CHECK_THROWS_AS(interstep_similarity(m, {}, 4), DataError);
}

TEST_CASE("predictions go through the deployed path") {
    Model m(tiny_backbone(), tiny_scaffold());
    const auto& s = small_set()[0];
    const std::string p = predict_answer(m, s, 2, 5);
    CHECK(p == predict_answer(m, s, 2, 5));
    CHECK(predict_answers(m, small_set(), -1, 3).size() == small_set().size());
    const double acc = closed_ended_accuracy(m, small_set(), 2, 4);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    std::vector<FiveTuple> open;
    for (const auto& t : small_set())
        if (!t.closed_ended()) open.push_back(t);
    if (!open.empty()) CHECK_THROWS_AS(closed_ended_accuracy(m, open, 2), DataError);
}

TEST_CASE("latency bench: K = 0 baseline row and per-step costs") {
    Model m(tiny_backbone(), std::nullopt);
    LatencyOptions opts;
    opts.repetitions = 5;
    opts.warmup = 1;
    opts.answer_len = 3;
    auto table = latency_bench(m, small_set(), {0, 1, 2, 3, 4}, opts);
    REQUIRE(table.rows.size() == 5);
    CHECK(table.rows[0].K == 0);
    CHECK(table.rows[0].per_step_ms == 0.0);
    for (const auto& r : table.rows) CHECK(r.median_ms > 0.0);
    CHECK(table.slope_ms > 0.0);
    CHECK(table.rows[4].median_ms > table.rows[0].median_ms);

    auto tmp = std::filesystem::temp_directory_path() / "vital_latency.csv";
    write_latency_csv(tmp, table);
    std::ifstream in(tmp);
    std::string header;
    std::getline(in, header);
    CHECK(header == "K,median_ms,per_step_ms");
    std::filesystem::remove(tmp);

    CHECK_THROWS_AS(latency_bench(m, {}, {0, 1}), DataError);
    CHECK_THROWS_AS(latency_bench(m, small_set(), {}), ArgumentError);
}

TEST_CASE("latency deviation against a hand table") {
    LatencyTable t;
    t.rows = {{0, 10.0, 0.0}, {1, 11.0, 1.0}, {2, 12.4, 1.2}};
    t.slope_ms = 1.0;
    CHECK(t.max_relative_deviation() == doctest::Approx(0.2));
}

TEST_CASE("heatmap evolution: one map per step, bounded values, detached model refused") {
    Model m(tiny_backbone(), tiny_scaffold());
    ToyEncoder enc(8, 16, DatasetConfig{}.encoder_seed);
    const auto& s = small_set()[0];
    auto h = heatmap_evolution(m, enc, s, 3);
    CHECK(h.maps.size() == 3);
    CHECK(h.argmax.size() == 3);
    CHECK(h.gt_cells.size() == 64);
    for (const auto& map : h.maps) {
        CHECK(map.size() == 64);
        for (double v : map.values()) {
            CHECK(v >= -1.0 - 1e-12);
            CHECK(v <= 1.0 + 1e-12);
        }
    }
    auto dir = std::filesystem::temp_directory_path() / "vital_heatmaps";
    std::filesystem::remove_all(dir);
    write_heatmaps(dir, h);
    for (int k = 1; k <= 3; ++k) CHECK(std::filesystem::exists(dir / ("step_" + std::to_string(k) + ".pgm")));
    CHECK(std::filesystem::exists(dir / "gt_mask.pgm"));
    CHECK(std::filesystem::exists(dir / "heatmap.csv"));
    std::filesystem::remove_all(dir);

    Model bare(tiny_backbone(), std::nullopt);
    CHECK_THROWS_AS(heatmap_evolution(bare, enc, s, 3), DetachedError);
    CHECK_THROWS_AS(heatmap_evolution(m, enc, s, 0), ArgumentError);
}
