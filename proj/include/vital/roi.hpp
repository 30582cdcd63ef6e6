#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vital/image.hpp"
#include "vital/tensor.hpp"

namespace vital {

// p×p grid of d_v-vectors, row-major (row i·p + j is patch (i, j)).
struct PatchFeatureMap {
    std::size_t grid = 0;
    Tensor features;
    std::string encoder_id;
    std::string provenance;  // "full" | "crop"
};

// Frozen stand-in for the external vision encoder. Each patch is described by
// (mean, variance, row, col, four oriented-filter responses) and mapped to d_v
// through a fixed seeded projection followed by tanh.
class ToyEncoder {
public:
    static constexpr std::size_t kDescriptor = 8;

    explicit ToyEncoder(std::size_t grid = 8, std::size_t d_v = 16, std::uint64_t seed = 0xE5C0DE);

    std::size_t grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return d_v_; }
    std::string id() const;

    // Square region of side divisible by the grid.
    PatchFeatureMap encode(const ToyImage& region, const std::string& provenance = "full") const;
    std::vector<double> descriptor(const ToyImage& region, std::size_t pr, std::size_t pc) const;

private:
    std::size_t grid_;
    std::size_t d_v_;
    std::uint64_t seed_;
    Tensor proj_;  // d_v × kDescriptor
    Tensor bias_;  // 1 × d_v
};

struct DownsampledMask {
    std::size_t grid = 0;
    std::vector<double> fraction;  // covered share of each cell's area
    std::vector<char> cells;       // fraction ≥ threshold (or the fallback cell)
    bool used_fallback = false;

    std::size_t count() const;
};

inline constexpr double kMaskBinarize = 0.3;

// Exact fractional-area accounting: cell (i, j) spans [i·G/p, (i+1)·G/p) in
// pixel units and a pixel contributes its overlapping area.
DownsampledMask downsample_mask(const Mask& mask, std::size_t grid, double threshold = kMaskBinarize);

// Area-weighted resampling of a square grid of side `from` to side `to`.
std::vector<double> resample_area(const std::vector<double>& values, std::size_t from, std::size_t to);

struct CropRegion {
    Box box;                 // clamped source rectangle
    std::size_t side = 0;    // square side after zero padding
    std::size_t offset_row = 0, offset_col = 0;  // where the box sits inside the square
    ToyImage image;          // side × side, zero outside the box
    Mask mask;               // side × side
    Mask valid;              // side × side, true on real content
};

// Bounding box grown by ceil(P·side) per side, clamped, zero-padded to a
// square with the content centred.
CropRegion tight_crop(const ToyImage& image, const Mask& mask, double margin_ratio);

enum class Pathway { full, crop };
std::string to_string(Pathway p);

struct PatchScore {
    std::size_t index = 0;
    double similarity = 0.0;
    bool operator==(const PatchScore&) const = default;
};

struct RoiSampleMetrics {
    double coverage = 0.0;   // pooled cells / grid cells of the encoded map
    double intensity = 0.0;  // mean feature norm over pooled cells
    std::optional<double> snr;  // mean pooled norm / mean background norm

    bool operator==(const RoiSampleMetrics&) const = default;
};

struct ROIFeatureRecord {
    static constexpr std::uint32_t kVersion = 1;

    Tensor feature;  // 1 × d_v, unit norm
    Tensor global;   // 1 × d_v, unit norm: mean over every full-image patch
    Pathway pathway = Pathway::full;
    double mask_ratio = 0.0;
    double threshold_T = 0.2;
    double margin_P = 0.05;
    std::vector<PatchScore> top_patches;  // descending similarity
    std::vector<std::size_t> pooled_cells;
    RoiSampleMetrics metrics;

    bool operator==(const ROIFeatureRecord&) const = default;
};

inline constexpr double kDefaultAreaThreshold = 0.20;
inline constexpr double kDefaultMargin = 0.05;

struct RoiOptions {
    double threshold_T = kDefaultAreaThreshold;
    double margin_P = kDefaultMargin;
    std::size_t crop_patch_pixels = 4;  // crops are resampled to grid · this
};

Pathway select_pathway(double mask_ratio, double threshold_T);

ROIFeatureRecord extract_roi(const ToyEncoder& encoder, const ToyImage& image, const Mask& mask,
                             const RoiOptions& opts = {});

void save_roi(const std::filesystem::path& path, const ROIFeatureRecord& rec);
ROIFeatureRecord load_roi(const std::filesystem::path& path);

struct RoiMetrics {
    double coverage = 0.0;
    double intensity = 0.0;
    double snr = 0.0;
    std::size_t samples = 0;
    std::size_t snr_excluded = 0;  // samples with no background cells
};

RoiMetrics compute_metrics(const std::vector<RoiSampleMetrics>& samples);

struct GridCell {
    double T = 0.0;
    double P = 0.0;
    RoiMetrics metrics;
    std::size_t failures = 0;
};

struct GridSearchResult {
    std::vector<GridCell> cells;
    std::size_t selected = 0;  // highest SNR, ties broken by coverage
    std::string report;
};

struct RoiSample {
    ToyImage image;
    Mask mask;
};

GridSearchResult grid_search(const ToyEncoder& encoder, const std::vector<double>& T_set,
                             const std::vector<double>& P_set, const std::vector<RoiSample>& samples);
void write_grid_csv(const std::filesystem::path& path, const GridSearchResult& result);

}  // namespace vital
