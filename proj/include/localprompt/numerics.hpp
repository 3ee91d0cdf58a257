#pragma once

// Dense vector kernels shared by every score and loss: cosine similarity,
// temperature softmax and the top-k reductions T_k (sum) / T_k^mean (mean).

#include <cstddef>
#include <span>
#include <vector>

namespace lp {

using Vec = std::vector<double>;

// Row-major dense matrix; rows are embedding vectors of length cols().
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<double> row(std::size_t r) noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    // Appends one row; the first append on an empty matrix fixes cols().
    void push_row(std::span<const double> v);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline constexpr double kMinNorm = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm(std::span<const double> a) noexcept;

// Throws ZeroNormVector when either norm is below kMinNorm.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Max-subtracted softmax of row / T. Throws NonPositiveTemperature, EmptyInput.
Vec softmax(std::span<const double> row, double temperature);

// Sum / mean of the min(k, len) largest values. Throws EmptyInput.
double topk_sum(std::span<const double> xs, std::size_t k);
double topk_mean(std::span<const double> xs, std::size_t k);

// Indices of the min(k, len) largest values, ties to the lowest index,
// returned in ascending index order.
std::vector<std::size_t> topk_support(std::span<const double> xs, std::size_t k);

// Index of the maximum, lowest index on ties. Throws EmptyInput.
std::size_t argmax(std::span<const double> xs);

// exp(x) with x clamped to at most kExpClamp.
inline constexpr double kExpClamp = 80.0;
double clamped_exp(double x) noexcept;

bool all_finite(std::span<const double> xs) noexcept;

// Rounds every entry to the nearest binary32 value (the on-disk precision).
void round_to_binary32(std::span<double> xs) noexcept;

}  // namespace lp
