#include "vital/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "vital/error.hpp"

namespace vital {

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (char c : cells) n += c ? 1 : 0;
    return n;
}

std::optional<Box> Mask::bounding_box() const {
    int r0 = static_cast<int>(size), c0 = static_cast<int>(size), r1 = -1, c1 = -1;
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c)
            if (at(r, c)) {
                r0 = std::min(r0, static_cast<int>(r));
                c0 = std::min(c0, static_cast<int>(c));
                r1 = std::max(r1, static_cast<int>(r));
                c1 = std::max(c1, static_cast<int>(c));
            }
    if (r1 < 0) return std::nullopt;
    return Box{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

namespace {

unsigned char quantize(double v) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<unsigned char>(q);
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<double>& values) {
    if (values.size() != width * height) throw DataError("pgm size mismatch for " + path.string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    for (double v : values) out.put(static_cast<char>(quantize(v)));
}

std::vector<double> read_pgm(const std::filesystem::path& path, std::size_t& width, std::size_t& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::string magic;
    int maxval = 0;
    in >> magic >> width >> height >> maxval;
    if (magic != "P5" || maxval != 255) throw DataError("unsupported graymap " + path.string());
    in.get();
    std::vector<double> values(width * height);
    for (auto& v : values) {
        const int c = in.get();
        if (c == EOF) throw DataError("truncated graymap " + path.string());
        v = static_cast<double>(c) / 255.0;
    }
    return values;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P6\n" << img.size << " " << img.size << "\n255\n";
    for (double v : img.rgb) out.put(static_cast<char>(quantize(v)));
}

void save_image(const std::filesystem::path& path, const ToyImage& img) {
    write_pgm(path, img.size, img.size, img.pixels);
}

ToyImage load_image(const std::filesystem::path& path) {
    std::size_t w = 0, h = 0;
    auto values = read_pgm(path, w, h);
    if (w != h) throw DataError("image is not square: " + path.string());
    ToyImage img(w);
    img.pixels = std::move(values);
    return img;
}

void save_mask(const std::filesystem::path& path, const Mask& m) {
    std::vector<double> v(m.cells.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.cells[i] ? 1.0 : 0.0;
    write_pgm(path, m.size, m.size, v);
}

Mask load_mask(const std::filesystem::path& path) {
    std::size_t w = 0, h = 0;
    auto values = read_pgm(path, w, h);
    if (w != h) throw DataError("mask is not square: " + path.string());
    Mask m(w);
    for (std::size_t i = 0; i < values.size(); ++i) m.cells[i] = values[i] >= 0.5 ? 1 : 0;
    return m;
}

}  // namespace vital
