#include "localprompt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "localprompt/error.hpp"

namespace lp {

void Matrix::push_row(std::span<const double> v) {
    if (rows_ == 0 && data_.empty()) {
        cols_ = v.size();
    }
    if (v.size() != cols_) {
        fail(ErrorCode::DimensionMismatch, "row length " + std::to_string(v.size()) +
                                               " does not match matrix width " +
                                               std::to_string(cols_));
    }
    data_.insert(data_.end(), v.begin(), v.end());
    ++rows_;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimensionMismatch, "cosine_sim: length mismatch");
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na < kMinNorm || nb < kMinNorm) {
        fail(ErrorCode::ZeroNormVector, "cosine_sim: zero-norm vector");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vec softmax(std::span<const double> row, double temperature) {
    if (!(temperature > 0.0)) {
        fail(ErrorCode::NonPositiveTemperature, "softmax: temperature must be > 0");
    }
    if (row.empty()) {
        fail(ErrorCode::EmptyInput, "softmax: empty input");
    }
    const double hi = *std::max_element(row.begin(), row.end());
    Vec out(row.size());
    double total = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp((row[i] - hi) / temperature);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

namespace {

// Indices ordered by value descending, then index ascending; first k kept.
std::vector<std::size_t> ranked_prefix(std::span<const double> xs, std::size_t k) {
    if (xs.empty()) {
        fail(ErrorCode::EmptyInput, "top-k: empty input");
    }
    k = std::min(k, xs.size());
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return xs[a] > xs[b] || (xs[a] == xs[b] && a < b);
                      });
    idx.resize(k);
    return idx;
}

}  // namespace

double topk_sum(std::span<const double> xs, std::size_t k) {
    double s = 0.0;
    for (std::size_t i : ranked_prefix(xs, k)) {
        s += xs[i];
    }
    return s;
}

double topk_mean(std::span<const double> xs, std::size_t k) {
    const auto top = ranked_prefix(xs, k);
    double s = 0.0;
    for (std::size_t i : top) {
        s += xs[i];
    }
    return s / static_cast<double>(top.size());
}

std::vector<std::size_t> topk_support(std::span<const double> xs, std::size_t k) {
    auto idx = ranked_prefix(xs, k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::size_t argmax(std::span<const double> xs) {
    if (xs.empty()) {
        fail(ErrorCode::EmptyInput, "argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) {
            best = i;
        }
    }
    return best;
}

double clamped_exp(double x) noexcept { return std::exp(std::min(x, kExpClamp)); }

bool all_finite(std::span<const double> xs) noexcept {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

void round_to_binary32(std::span<double> xs) noexcept {
    for (double& v : xs) {
        v = static_cast<double>(static_cast<float>(v));
    }
}

}  // namespace lp
