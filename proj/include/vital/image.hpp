#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

namespace vital {

// Axis-aligned rectangle on the pixel grid (row/col of the top-left corner).
struct Box {
    int row0 = 0;
    int col0 = 0;
    int height = 0;
    int width = 0;

    int row1() const { return row0 + height; }
    int col1() const { return col0 + width; }
    bool operator==(const Box&) const = default;
};

// Square grid of intensities in [0, 1]. Synthetic targets carry their
// rectangle for data generation; the model never sees it.
struct ToyImage {
    std::size_t size = 0;
    std::vector<double> pixels;
    std::optional<Box> target;

    ToyImage() = default;
    explicit ToyImage(std::size_t g, double fill = 0.0) : size(g), pixels(g * g, fill) {}

    double& at(std::size_t r, std::size_t c) { return pixels[r * size + c]; }
    double at(std::size_t r, std::size_t c) const { return pixels[r * size + c]; }
    bool operator==(const ToyImage& o) const { return size == o.size && pixels == o.pixels; }
};

// Square boolean grid aligned to an image.
struct Mask {
    std::size_t size = 0;
    std::vector<char> cells;

    Mask() = default;
    explicit Mask(std::size_t g, bool fill = false) : size(g), cells(g * g, fill ? 1 : 0) {}

    bool at(std::size_t r, std::size_t c) const { return cells[r * size + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v) { cells[r * size + c] = v ? 1 : 0; }
    std::size_t count() const;
    double ratio() const { return cells.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(cells.size()); }
    std::optional<Box> bounding_box() const;
    bool operator==(const Mask&) const = default;
};

// RGB image, channels interleaved, values in [0, 1].
struct RgbImage {
    std::size_t size = 0;
    std::vector<double> rgb;

    double& at(std::size_t r, std::size_t c, std::size_t ch) { return rgb[(r * size + c) * 3 + ch]; }
    double at(std::size_t r, std::size_t c, std::size_t ch) const { return rgb[(r * size + c) * 3 + ch]; }
};

// Binary 8-bit portable graymap (P5). Values are quantized to k/255.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<double>& values);
std::vector<double> read_pgm(const std::filesystem::path& path, std::size_t& width, std::size_t& height);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

void save_image(const std::filesystem::path& path, const ToyImage& img);
ToyImage load_image(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const Mask& m);
Mask load_mask(const std::filesystem::path& path);

}  // namespace vital
