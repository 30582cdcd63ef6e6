#include "vital/roi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <sstream>

#include "vital/error.hpp"
#include "vital/ops.hpp"
#include "vital/rng.hpp"

namespace vital {

namespace {

constexpr double kBoundaryEps = 1e-12;

// Overlap of [a0, a1) and [b0, b1).
double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

// to × from matrix of area weights, rows summing to one.
std::vector<double> area_weights(std::size_t from, std::size_t to) {
    std::vector<double> w(to * from, 0.0);
    const double step = static_cast<double>(from) / static_cast<double>(to);
    for (std::size_t i = 0; i < to; ++i)
        for (std::size_t j = 0; j < from; ++j)
            w[i * from + j] = overlap(i * step, (i + 1) * step, static_cast<double>(j), j + 1.0) / step;
    return w;
}

}  // namespace

ToyEncoder::ToyEncoder(std::size_t grid, std::size_t d_v, std::uint64_t seed)
    : grid_(grid), d_v_(d_v), seed_(seed), proj_(d_v, kDescriptor), bias_(1, d_v) {
    if (grid == 0 || d_v == 0) throw ConfigError("encoder grid and width must be positive");
    Rng rng(derive_seed(seed, 0xFEA7));
    for (auto& v : proj_.values()) v = rng.normal(0.0, 1.0 / std::sqrt(2.0));
    for (auto& v : bias_.values()) v = rng.normal(0.0, 0.1);
}

std::string ToyEncoder::id() const {
    return "toy-encoder/p" + std::to_string(grid_) + "/d" + std::to_string(d_v_) + "/s" + std::to_string(seed_);
}

std::vector<double> ToyEncoder::descriptor(const ToyImage& region, std::size_t pr, std::size_t pc) const {
    const std::size_t q = region.size / grid_;
    const std::size_t n = q * q;
    double mean = 0.0;
    for (std::size_t r = 0; r < q; ++r)
        for (std::size_t c = 0; c < q; ++c) mean += region.at(pr * q + r, pc * q + c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    // Oriented responses: left-right, top-bottom, diagonal quadrants, centre-surround.
    double horiz = 0.0, vert = 0.0, diag = 0.0, centre = 0.0, surround = 0.0;
    std::size_t n_centre = 0;
    const double half = static_cast<double>(q) / 2.0;
    for (std::size_t r = 0; r < q; ++r)
        for (std::size_t c = 0; c < q; ++c) {
            const double v = region.at(pr * q + r, pc * q + c);
            var += (v - mean) * (v - mean);
            const double sr = (r + 0.5 < half) ? 1.0 : (r + 0.5 > half ? -1.0 : 0.0);
            const double sc = (c + 0.5 < half) ? 1.0 : (c + 0.5 > half ? -1.0 : 0.0);
            horiz += sc * v;
            vert += sr * v;
            diag += sr * sc * v;
            const double dr = std::abs(r + 0.5 - half), dc = std::abs(c + 0.5 - half);
            if (std::max(dr, dc) <= static_cast<double>(q) / 4.0) {
                centre += v;
                ++n_centre;
            } else {
                surround += v;
            }
        }
    var /= static_cast<double>(n);
    const double nd = static_cast<double>(n);
    const double cs = (n_centre == 0 || n_centre == n)
                          ? 0.0
                          : centre / static_cast<double>(n_centre) - surround / static_cast<double>(n - n_centre);
    const double g = static_cast<double>(grid_);
    return {2.0 * (mean - 0.5),
            4.0 * var,
            2.0 * ((pr + 0.5) / g - 0.5),
            2.0 * ((pc + 0.5) / g - 0.5),
            2.0 * horiz / nd,
            2.0 * vert / nd,
            2.0 * diag / nd,
            2.0 * cs};
}

PatchFeatureMap ToyEncoder::encode(const ToyImage& region, const std::string& provenance) const {
    if (region.size == 0 || region.pixels.empty()) throw DataError("cannot encode an empty region");
    if (region.size % grid_ != 0)
        throw ShapeError("region side " + std::to_string(region.size) + " not divisible by grid " + std::to_string(grid_));
    PatchFeatureMap out{grid_, Tensor(grid_ * grid_, d_v_), id(), provenance};
    for (std::size_t pr = 0; pr < grid_; ++pr)
        for (std::size_t pc = 0; pc < grid_; ++pc) {
            const auto phi = descriptor(region, pr, pc);
            auto row = out.features.row(pr * grid_ + pc);
            for (std::size_t o = 0; o < d_v_; ++o) {
                double s = bias_[o];
                for (std::size_t i = 0; i < kDescriptor; ++i) s += proj_.at(o, i) * phi[i];
                row[o] = std::tanh(s);
            }
        }
    return out;
}

std::size_t DownsampledMask::count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
}

DownsampledMask downsample_mask(const Mask& mask, std::size_t grid, double threshold) {
    if (grid == 0 || mask.size == 0) throw ShapeError("downsample_mask needs a nonempty mask and grid");
    if (mask.count() == 0) throw DataError("empty mask");
    const double step = static_cast<double>(mask.size) / static_cast<double>(grid);
    // Per-axis overlap of pixel j with cell i, so the 2-D area is a product.
    std::vector<double> w(grid * mask.size, 0.0);
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < mask.size; ++j)
            w[i * mask.size + j] = overlap(i * step, (i + 1) * step, static_cast<double>(j), j + 1.0);
    DownsampledMask out{grid, std::vector<double>(grid * grid, 0.0), std::vector<char>(grid * grid, 0), false};
    const double cell_area = step * step;
    for (std::size_t r = 0; r < mask.size; ++r)
        for (std::size_t c = 0; c < mask.size; ++c) {
            if (!mask.at(r, c)) continue;
            for (std::size_t i = 0; i < grid; ++i) {
                const double wr = w[i * mask.size + r];
                if (wr == 0.0) continue;
                for (std::size_t j = 0; j < grid; ++j) out.fraction[i * grid + j] += wr * w[j * mask.size + c];
            }
        }
    for (auto& f : out.fraction) f /= cell_area;
    std::size_t best = 0;
    for (std::size_t k = 0; k < out.fraction.size(); ++k) {
        out.cells[k] = out.fraction[k] >= threshold - kBoundaryEps ? 1 : 0;
        if (out.fraction[k] > out.fraction[best]) best = k;
    }
    if (out.count() == 0) {
        out.cells[best] = 1;
        out.used_fallback = true;
    }
    return out;
}

std::vector<double> resample_area(const std::vector<double>& values, std::size_t from, std::size_t to) {
    if (values.size() != from * from) throw ShapeError("resample_area input is not square");
    if (to == 0) throw ShapeError("resample_area to an empty grid");
    if (from == to) return values;
    const auto w = area_weights(from, to);
    std::vector<double> tmp(to * from, 0.0), out(to * to, 0.0);
    for (std::size_t i = 0; i < to; ++i)
        for (std::size_t j = 0; j < from; ++j) {
            const double wij = w[i * from + j];
            if (wij == 0.0) continue;
            for (std::size_t c = 0; c < from; ++c) tmp[i * from + c] += wij * values[j * from + c];
        }
    for (std::size_t r = 0; r < to; ++r)
        for (std::size_t i = 0; i < to; ++i)
            for (std::size_t j = 0; j < from; ++j) out[r * to + i] += w[i * from + j] * tmp[r * from + j];
    return out;
}

CropRegion tight_crop(const ToyImage& image, const Mask& mask, double margin_ratio) {
    if (mask.size != image.size) throw ShapeError("mask and image sizes differ");
    if (margin_ratio < 0.0) throw ArgumentError("margin ratio must be non-negative");
    const auto bb = mask.bounding_box();
    if (!bb) throw DataError("empty mask");
    const int G = static_cast<int>(image.size);
    const int mr = static_cast<int>(std::ceil(margin_ratio * bb->height - kBoundaryEps));
    const int mc = static_cast<int>(std::ceil(margin_ratio * bb->width - kBoundaryEps));
    const int r0 = std::max(0, bb->row0 - mr), c0 = std::max(0, bb->col0 - mc);
    const int r1 = std::min(G, bb->row1() + mr), c1 = std::min(G, bb->col1() + mc);
    CropRegion out;
    out.box = Box{r0, c0, r1 - r0, c1 - c0};
    out.side = static_cast<std::size_t>(std::max(out.box.height, out.box.width));
    out.offset_row = (out.side - static_cast<std::size_t>(out.box.height)) / 2;
    out.offset_col = (out.side - static_cast<std::size_t>(out.box.width)) / 2;
    out.image = ToyImage(out.side, 0.0);
    out.mask = Mask(out.side);
    out.valid = Mask(out.side);
    for (int r = 0; r < out.box.height; ++r)
        for (int c = 0; c < out.box.width; ++c) {
            const std::size_t tr = out.offset_row + r, tc = out.offset_col + c;
            out.image.at(tr, tc) = image.at(r0 + r, c0 + c);
            out.mask.set(tr, tc, mask.at(r0 + r, c0 + c));
            out.valid.set(tr, tc, true);
        }
    return out;
}

std::string to_string(Pathway p) { return p == Pathway::full ? "full" : "crop"; }

Pathway select_pathway(double mask_ratio, double threshold_T) {
    return mask_ratio >= threshold_T - kBoundaryEps ? Pathway::full : Pathway::crop;
}

ROIFeatureRecord extract_roi(const ToyEncoder& encoder, const ToyImage& image, const Mask& mask,
                             const RoiOptions& opts) {
    if (mask.size != image.size) throw ShapeError("mask and image sizes differ");
    if (mask.count() == 0) throw DataError("empty mask");
    const std::size_t p = encoder.grid();
    ROIFeatureRecord rec;
    rec.mask_ratio = mask.ratio();
    rec.threshold_T = opts.threshold_T;
    rec.margin_P = opts.margin_P;
    rec.pathway = select_pathway(rec.mask_ratio, opts.threshold_T);

    const PatchFeatureMap full = encoder.encode(image, "full");
    {
        Tensor g(1, encoder.dim());
        for (std::size_t k = 0; k < p * p; ++k)
            for (std::size_t i = 0; i < encoder.dim(); ++i) g[i] += full.features.at(k, i);
        rec.global = kernels::l2_normalize(g);
    }

    PatchFeatureMap map;
    std::vector<char> pool, valid(p * p, 1);
    if (rec.pathway == Pathway::full) {
        map = full;
        pool = downsample_mask(mask, p).cells;
    } else {
        const CropRegion crop = tight_crop(image, mask, opts.margin_P);
        const std::size_t N = p * opts.crop_patch_pixels;
        ToyImage resized(N);
        resized.pixels = resample_area(crop.image.pixels, crop.side, N);
        map = encoder.encode(resized, "crop");
        const auto dm = downsample_mask(crop.mask, p);
        const auto dv = downsample_mask(crop.valid, p, 0.5);
        pool.assign(p * p, 0);
        for (std::size_t k = 0; k < p * p; ++k) {
            valid[k] = dv.cells[k];
            pool[k] = dm.cells[k] && dv.cells[k] ? 1 : 0;
        }
        if (std::count(pool.begin(), pool.end(), 1) == 0) {
            const auto best = std::max_element(dm.fraction.begin(), dm.fraction.end()) - dm.fraction.begin();
            pool[static_cast<std::size_t>(best)] = 1;
        }
    }

    Tensor pooled(1, encoder.dim());
    std::vector<double> norms(p * p);
    double roi_norm = 0.0, bg_norm = 0.0;
    std::size_t n_bg = 0;
    for (std::size_t k = 0; k < p * p; ++k) {
        norms[k] = l2_norm(map.features.row(k));
        if (pool[k]) {
            rec.pooled_cells.push_back(k);
            for (std::size_t i = 0; i < encoder.dim(); ++i) pooled[i] += map.features.at(k, i);
            roi_norm += norms[k];
        } else if (valid[k]) {
            bg_norm += norms[k];
            ++n_bg;
        }
    }
    const double n_pool = static_cast<double>(rec.pooled_cells.size());
    for (auto& v : pooled.values()) v /= n_pool;
    rec.feature = kernels::l2_normalize(pooled);

    rec.metrics.coverage = n_pool / static_cast<double>(p * p);
    rec.metrics.intensity = roi_norm / n_pool;
    if (n_bg > 0 && bg_norm > 0.0) rec.metrics.snr = rec.metrics.intensity / (bg_norm / static_cast<double>(n_bg));

    std::vector<PatchScore> scores;
    for (std::size_t k = 0; k < p * p; ++k) {
        const double nf = norms[k];
        scores.push_back({k, nf == 0.0 ? 0.0 : cosine_similarity(rec.feature.values(), map.features.row(k))});
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](const PatchScore& a, const PatchScore& b) { return a.similarity > b.similarity; });
    scores.resize(std::min<std::size_t>(5, scores.size()));
    rec.top_patches = std::move(scores);
    return rec;
}

namespace {

constexpr char kRoiMagic[8] = {'V', 'I', 'T', 'A', 'L', 'R', 'O', 'I'};

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated ROI record " + path.string());
    return v;
}

void put_vec(std::ostream& out, const Tensor& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
    for (double v : t.values()) put<double>(out, v);
}

Tensor get_vec(std::istream& in, const std::filesystem::path& path) {
    const auto n = get<std::uint32_t>(in, path);
    Tensor t(1, n);
    for (auto& v : t.values()) v = get<double>(in, path);
    return t;
}

}  // namespace

void save_roi(const std::filesystem::path& path, const ROIFeatureRecord& rec) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kRoiMagic, 8);
    put<std::uint32_t>(out, ROIFeatureRecord::kVersion);
    put_vec(out, rec.feature);
    put_vec(out, rec.global);
    put<std::uint8_t>(out, rec.pathway == Pathway::full ? 0 : 1);
    put<double>(out, rec.mask_ratio);
    put<double>(out, rec.threshold_T);
    put<double>(out, rec.margin_P);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.top_patches.size()));
    for (const auto& s : rec.top_patches) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.index));
        put<double>(out, s.similarity);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.pooled_cells.size()));
    for (auto k : rec.pooled_cells) put<std::uint32_t>(out, static_cast<std::uint32_t>(k));
    put<double>(out, rec.metrics.coverage);
    put<double>(out, rec.metrics.intensity);
    put<std::uint8_t>(out, rec.metrics.snr ? 1 : 0);
    put<double>(out, rec.metrics.snr.value_or(0.0));
}

ROIFeatureRecord load_roi(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kRoiMagic, 8) != 0) throw DataError("not an ROI record: " + path.string());
    const auto version = get<std::uint32_t>(in, path);
    if (version != ROIFeatureRecord::kVersion) throw DataError("unsupported ROI record version " + std::to_string(version));
    ROIFeatureRecord rec;
    rec.feature = get_vec(in, path);
    rec.global = get_vec(in, path);
    rec.pathway = get<std::uint8_t>(in, path) == 0 ? Pathway::full : Pathway::crop;
    rec.mask_ratio = get<double>(in, path);
    rec.threshold_T = get<double>(in, path);
    rec.margin_P = get<double>(in, path);
    const auto ntop = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < ntop; ++i) {
        PatchScore s;
        s.index = get<std::uint32_t>(in, path);
        s.similarity = get<double>(in, path);
        rec.top_patches.push_back(s);
    }
    const auto npool = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < npool; ++i) rec.pooled_cells.push_back(get<std::uint32_t>(in, path));
    rec.metrics.coverage = get<double>(in, path);
    rec.metrics.intensity = get<double>(in, path);
    const bool has_snr = get<std::uint8_t>(in, path) != 0;
    const double snr = get<double>(in, path);
    if (has_snr) rec.metrics.snr = snr;
    return rec;
}

RoiMetrics compute_metrics(const std::vector<RoiSampleMetrics>& samples) {
    if (samples.empty()) throw DataError("compute_metrics needs at least one sample");
    RoiMetrics m;
    m.samples = samples.size();
    std::size_t n_snr = 0;
    for (const auto& s : samples) {
        m.coverage += s.coverage;
        m.intensity += s.intensity;
        if (s.snr) {
            m.snr += *s.snr;
            ++n_snr;
        } else {
            ++m.snr_excluded;
        }
    }
    m.coverage /= static_cast<double>(samples.size());
    m.intensity /= static_cast<double>(samples.size());
    m.snr = n_snr ? m.snr / static_cast<double>(n_snr) : 0.0;
    return m;
}

GridSearchResult grid_search(const ToyEncoder& encoder, const std::vector<double>& T_set,
                             const std::vector<double>& P_set, const std::vector<RoiSample>& samples) {
    if (T_set.empty() || P_set.empty() || samples.empty()) throw ArgumentError("grid search needs nonempty sets");
    GridSearchResult res;
    for (double T : T_set)
        for (double P : P_set) {
            GridCell cell{T, P, {}, 0};
            std::vector<RoiSampleMetrics> per;
            for (const auto& s : samples) {
                try {
                    per.push_back(extract_roi(encoder, s.image, s.mask, RoiOptions{T, P, 4}).metrics);
                } catch (const Error&) {
                    ++cell.failures;
                }
            }
            if (!per.empty()) cell.metrics = compute_metrics(per);
            res.cells.push_back(cell);
        }
    for (std::size_t i = 1; i < res.cells.size(); ++i) {
        const auto& a = res.cells[i].metrics;
        const auto& b = res.cells[res.selected].metrics;
        if (a.snr > b.snr || (a.snr == b.snr && a.coverage > b.coverage)) res.selected = i;
    }
    std::ostringstream rep;
    rep << std::setprecision(6) << "grid search over " << T_set.size() << " x " << P_set.size() << " cells, "
        << samples.size() << " samples\n"
        << "highest SNR: T=" << res.cells[res.selected].T << " P=" << res.cells[res.selected].P
        << " (snr " << res.cells[res.selected].metrics.snr << ", coverage " << res.cells[res.selected].metrics.coverage
        << ")\nreport only; extraction defaults stay T=" << kDefaultAreaThreshold << " P=" << kDefaultMargin << "\n";
    res.report = rep.str();
    return res;
}

void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "T,P,coverage_pct,intensity,snr,samples,snr_excluded,failures\n";
    out << std::setprecision(10);
    for (const auto& c : result.cells)
        out << c.T << "," << c.P << "," << 100.0 * c.metrics.coverage << "," << c.metrics.intensity << ","
            << c.metrics.snr << "," << c.metrics.samples << "," << c.metrics.snr_excluded << "," << c.failures << "\n";
}

}  // namespace vital
