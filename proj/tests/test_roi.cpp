#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "vital/roi.hpp"
#include "vital/rng.hpp"

using namespace vital;

namespace {

Mask rect_mask(std::size_t G, int r0, int c0, int h, int w) {
    Mask m(G);
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) m.set(r, c, true);
    return m;
}

ToyImage noisy_image(std::size_t G, Rng& rng) {
    ToyImage img(G);
    for (auto& p : img.pixels) p = 0.4 + 0.1 * rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("encoder determinism, constant image, locality") {
    ToyEncoder enc;
    Rng rng(1);
    auto img = noisy_image(32, rng);
    CHECK(enc.encode(img).features == enc.encode(img).features);

    ToyImage flat(32, 0.3);
    for (std::size_t a = 0; a < 64; ++a) {
        auto da = enc.descriptor(flat, a / 8, a % 8);
        auto d0 = enc.descriptor(flat, 0, 0);
        for (std::size_t i : {0u, 1u, 4u, 5u, 6u, 7u}) CHECK(da[i] == d0[i]);
    }

    auto changed = img;
    for (int r = 8; r < 12; ++r)
        for (int c = 4; c < 8; ++c) changed.at(r, c) = 0.95;
    auto f0 = enc.encode(img).features, f1 = enc.encode(changed).features;
    for (std::size_t k = 0; k < 64; ++k) {
        const bool same = f0.row_copy(k) == f1.row_copy(k);
        CHECK(same == (k != 2 * 8 + 1));
    }
    CHECK_THROWS_AS(enc.encode(ToyImage(30)), ShapeError);
    CHECK_THROWS_AS(enc.encode(ToyImage()), DataError);
}

TEST_CASE("downsample_mask: full mask, 0.3 boundary, pixel-count oracle, fallback") {
    auto full = downsample_mask(Mask(32, true), 8);
    CHECK(full.count() == 64);

    // 10×10 cells on a 40-pixel image with a 4-grid: 29 vs 30 covered pixels.
    Mask m29(40), m30(40);
    for (int k = 0; k < 29; ++k) m29.set(k / 10, k % 10, true);
    for (int k = 0; k < 30; ++k) m30.set(k / 10, k % 10, true);
    CHECK_FALSE(downsample_mask(m29, 4).fraction[0] >= 0.3);
    CHECK(downsample_mask(m29, 4).used_fallback);
    CHECK(downsample_mask(m30, 4).cells[0] == 1);
    CHECK_FALSE(downsample_mask(m30, 4).used_fallback);

    Rng rng(2);
    for (std::size_t G : {32u, 30u, 17u}) {
        Mask m(G);
        for (auto& c : m.cells) c = rng.bernoulli(0.3) ? 1 : 0;
        m.set(0, 0, true);
        const std::size_t p = 8;
        auto ds = downsample_mask(m, p);
        double weighted = 0.0;
        const double step = static_cast<double>(G) / p;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                weighted += ds.fraction[i * p + j] * step * step;
                if (G % p == 0) {
                    std::size_t n = 0;
                    for (std::size_t r = i * G / p; r < (i + 1) * G / p; ++r)
                        for (std::size_t c = j * G / p; c < (j + 1) * G / p; ++c) n += m.at(r, c);
                    CHECK(ds.fraction[i * p + j] == doctest::Approx(n / (step * step)).epsilon(1e-12));
                }
            }
        CHECK(weighted == doctest::Approx(static_cast<double>(m.count())).epsilon(1e-10));
    }

    Mask one(32);
    one.set(5, 5, true);
    auto fb = downsample_mask(one, 8);
    CHECK(fb.used_fallback);
    CHECK(fb.count() == 1);
    CHECK(fb.cells[1 * 8 + 1] == 1);
    CHECK_THROWS_AS(downsample_mask(Mask(32), 8), DataError);
}

TEST_CASE("tight_crop geometry") {
    ToyImage img(64, 0.5);
    auto all = tight_crop(ToyImage(32, 0.2), Mask(32, true), 0.0);
    CHECK(all.box == Box{0, 0, 32, 32});
    CHECK(all.valid.count() == 32 * 32);

    // 40-pixel centred box, P = 0.05 → +2 per side → 44.
    auto c = tight_crop(img, rect_mask(64, 12, 12, 40, 40), 0.05);
    CHECK(c.box == Box{10, 10, 44, 44});
    CHECK(c.side == 44);

    auto corner = tight_crop(img, rect_mask(64, 0, 0, 10, 4), 0.1);
    CHECK(corner.box.row0 == 0);
    CHECK(corner.box.col0 == 0);
    CHECK(corner.box == Box{0, 0, 11, 5});
    CHECK(corner.side == 11);
    CHECK(corner.valid.count() == 55);
    CHECK_FALSE(corner.valid.at(0, 0));
    CHECK(corner.image.at(0, 0) == 0.0);
    CHECK_THROWS_AS(tight_crop(img, Mask(64), 0.05), DataError);
}

TEST_CASE("resample_area preserves mean and constants") {
    Rng rng(3);
    std::vector<double> v(11 * 11);
    for (auto& x : v) x = rng.uniform();
    for (std::size_t to : {4u, 11u, 32u}) {
        auto out = resample_area(v, 11, to);
        const double m_in = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        const double m_out = std::accumulate(out.begin(), out.end(), 0.0) / out.size();
        CHECK(m_out == doctest::Approx(m_in).epsilon(1e-12));
    }
    auto flat = resample_area(std::vector<double>(49, 0.25), 7, 32);
    for (double x : flat) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("extract_roi: pathways, single cell, unit norm, top-5") {
    ToyEncoder enc;
    Rng rng(4);
    auto img = noisy_image(32, rng);
    CHECK(select_pathway(0.25, 0.20) == Pathway::full);
    CHECK(select_pathway(0.20, 0.20) == Pathway::full);
    CHECK(select_pathway(0.05, 0.20) == Pathway::crop);

    auto big = extract_roi(enc, img, rect_mask(32, 0, 0, 16, 16), {});
    CHECK(big.pathway == Pathway::full);
    auto small = extract_roi(enc, img, rect_mask(32, 10, 10, 7, 7), {});
    CHECK(small.pathway == Pathway::crop);

    // One full 4×4 cell with T = 0 → full pathway, feature is that cell's, normalized.
    auto cell = extract_roi(enc, img, rect_mask(32, 8, 12, 4, 4), RoiOptions{0.0, 0.05, 4});
    REQUIRE(cell.pooled_cells == std::vector<std::size_t>{2 * 8 + 3});
    auto row = enc.encode(img).features.row_copy(19);
    const double n = l2_norm(row.values());
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(cell.feature[i] - row[i] / n) < 1e-15);
    CHECK(cell.top_patches[0].index == 19);
    CHECK(cell.top_patches[0].similarity == doctest::Approx(1.0).epsilon(1e-12));

    for (const auto* r : {&big, &small, &cell}) {
        CHECK(std::abs(l2_norm(r->feature.values()) - 1.0) <= 1e-6);
        CHECK(std::abs(l2_norm(r->global.values()) - 1.0) <= 1e-6);
        CHECK(r->top_patches.size() == 5);
        for (std::size_t i = 0; i + 1 < r->top_patches.size(); ++i)
            CHECK(r->top_patches[i].similarity >= r->top_patches[i + 1].similarity);
        for (const auto& s : r->top_patches) CHECK(s.similarity <= 1.0 + 1e-12);
    }

    auto path = std::filesystem::temp_directory_path() / "vital_roi_test.roi";
    save_roi(path, small);
    CHECK(load_roi(path) == small);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(extract_roi(enc, img, Mask(32), {}), DataError);
}

TEST_CASE("compute_metrics hand averages") {
    std::vector<RoiSampleMetrics> s{{0.25, 1.0, 2.0}, {0.5, 2.0, std::nullopt}, {1.0, 3.0, 4.0}};
    auto m = compute_metrics(s);
    CHECK(m.coverage == doctest::Approx(1.75 / 3));
    CHECK(m.intensity == doctest::Approx(2.0));
    CHECK(m.snr == doctest::Approx(3.0));
    CHECK(m.snr_excluded == 1);

    ToyEncoder enc;
    ToyImage img(32, 0.5);
    auto all = extract_roi(enc, img, Mask(32, true), {});
    CHECK(all.metrics.coverage == 1.0);
    CHECK_FALSE(all.metrics.snr.has_value());
    CHECK_THROWS_AS(compute_metrics({}), DataError);
}

TEST_CASE("grid search: singleton, determinism, coverage trend in T") {
    ToyEncoder enc;
    Rng rng(5);
    std::vector<RoiSample> set;
    for (int i = 0; i < 40; ++i) {
        const int side = 3 + static_cast<int>(rng.below(18));
        const int r0 = static_cast<int>(rng.below(32 - side)), c0 = static_cast<int>(rng.below(32 - side));
        auto img = noisy_image(32, rng);
        auto m = rect_mask(32, r0, c0, side, side);
        for (int r = r0; r < r0 + side; ++r)
            for (int c = c0; c < c0 + side; ++c) img.at(r, c) = 0.9;
        set.push_back({img, m});
    }
    auto one = grid_search(enc, {0.2}, {0.05}, set);
    std::vector<RoiSampleMetrics> per;
    for (const auto& s : set) per.push_back(extract_roi(enc, s.image, s.mask, {}).metrics);
    CHECK(one.cells.size() == 1);
    CHECK(one.cells[0].metrics.coverage == compute_metrics(per).coverage);

    auto g = grid_search(enc, {0.05, 0.10, 0.20}, {0.0, 0.03, 0.05, 0.10}, set);
    auto g2 = grid_search(enc, {0.05, 0.10, 0.20}, {0.0, 0.03, 0.05, 0.10}, set);
    for (std::size_t i = 0; i < g.cells.size(); ++i) CHECK(g.cells[i].metrics.coverage == g2.cells[i].metrics.coverage);
    for (std::size_t pi = 0; pi < 4; ++pi) {
        CHECK(g.cells[0 * 4 + pi].metrics.coverage <= g.cells[1 * 4 + pi].metrics.coverage);
        CHECK(g.cells[1 * 4 + pi].metrics.coverage <= g.cells[2 * 4 + pi].metrics.coverage);
    }
    CHECK(g.report.find("T=0.2 P=0.05") != std::string::npos);
}
