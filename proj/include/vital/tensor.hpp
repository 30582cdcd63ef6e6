#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vital/error.hpp"

namespace vital {

// Storage is always 64-bit. In 32-bit mode every kernel rounds its output
// through float, which reproduces single-precision arithmetic error without
// duplicating the kernels per scalar type.
enum class Precision { f64, f32 };

Precision current_precision() noexcept;

class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) noexcept;
    ~PrecisionScope();
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision saved_;
};

// Row-major dense matrix. A vector is a 1×n matrix.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor vector(std::vector<double> values);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }
    double item() const;

    Tensor row_copy(std::size_t r) const;
    void fill(double v);
    bool all_finite() const noexcept;
    // Round every entry through float when 32-bit mode is active.
    void apply_precision();

    bool operator==(const Tensor& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace vital
