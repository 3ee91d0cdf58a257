#pragma once
// Random fixtures and conversions shared by the unit tests and the
// acceptance binary.
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "localprompt/augmentation.hpp"
#include "localprompt/error.hpp"
#include "localprompt/feature_store.hpp"
#include "localprompt/numerics.hpp"
#include "localprompt/prompt_bank.hpp"
#include "oracle/naive.hpp"

namespace testing_support {

using lp::Matrix;
using lp::Vec;

// True when f throws lp::Error carrying this code.
template <typename F>
bool throws_code(F&& f, lp::ErrorCode code) {
    try {
        f();
    } catch (const lp::Error& e) {
        return e.code() == code;
    }
    return false;
}

inline double gauss(std::mt19937_64& g) { return std::normal_distribution<double>(0.0, 1.0)(g); }

inline Vec random_vec(std::mt19937_64& g, std::size_t d) {
    Vec v(d);
    for (double& x : v) x = gauss(g);
    return v;
}

inline Matrix random_matrix(std::mt19937_64& g, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& x : m.values()) x = gauss(g);
    return m;
}

inline naive::M to_naive(const Matrix& m) {
    naive::M out;
    for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
}

inline lp::PromptBank random_bank(std::mt19937_64& g, std::size_t c, std::size_t d, std::size_t n_neg) {
    lp::PromptBank b;
    b.global = random_matrix(g, c, d);
    b.local = random_matrix(g, c, d);
    b.negative = random_matrix(g, n_neg, d);
    if (n_neg == 0) b.negative = Matrix(0, d);
    return b;
}

inline lp::FeatureRecord random_record(std::mt19937_64& g, std::size_t d, std::size_t n, std::int32_t label,
                                       const std::string& id = "r") {
    lp::FeatureRecord r;
    r.image_id = id;
    r.label = label;
    r.global = random_vec(g, d);
    r.locals = random_matrix(g, n, d);
    return r;
}

inline lp::AugmentedBatchItem random_item(std::mt19937_64& g, std::size_t c, std::size_t d, std::size_t n,
                                          std::size_t m1, std::size_t m2) {
    lp::AugmentedBatchItem it;
    it.label = static_cast<std::int32_t>(std::uniform_int_distribution<std::size_t>(0, c - 1)(g));
    for (std::size_t i = 0; i < m1; ++i) it.positives.push_back(random_record(g, d, n, it.label));
    for (std::size_t i = 0; i < m2; ++i) it.negatives.push_back(random_record(g, d, n, it.label));
    return it;
}

inline naive::Item to_naive(const lp::AugmentedBatchItem& it) {
    naive::Item out;
    out.label = it.label;
    for (const auto& p : it.positives) out.positives.push_back(to_naive(p.locals));
    for (const auto& n : it.negatives) out.negatives.push_back(to_naive(n.locals));
    return out;
}

// Values rounded to binary32 so the store survives a file round trip.
inline lp::FeatureStore random_store(std::mt19937_64& g, std::size_t c, std::size_t d, std::size_t n,
                                     std::size_t records, std::size_t crop_sets, std::size_t m) {
    lp::FeatureStore s;
    s.d = static_cast<std::uint32_t>(d);
    s.n_tokens = static_cast<std::uint32_t>(n);
    s.n_classes = static_cast<std::uint32_t>(c);
    for (std::size_t i = 0; i < c; ++i) s.class_names.push_back("cls" + std::to_string(i));
    auto rounded = [&](lp::FeatureRecord r) {
        lp::round_to_binary32(r.global);
        lp::round_to_binary32(r.locals.values());
        return r;
    };
    for (std::size_t i = 0; i < records; ++i) {
        const auto label = static_cast<std::int32_t>(i % c);
        s.records.push_back(rounded(random_record(g, d, n, label, "img" + std::to_string(i))));
    }
    for (std::size_t j = 0; j < crop_sets && j < records; ++j) {
        lp::CropCandidateSet set{s.records[j].image_id, s.records[j].label, {}};
        for (std::size_t k = 0; k < m; ++k) {
            set.candidates.push_back(
                rounded(random_record(g, d, n, set.label, set.parent_image_id + "_c" + std::to_string(k))));
        }
        s.crop_sets.push_back(std::move(set));
    }
    return s;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("localprompt_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing_support
