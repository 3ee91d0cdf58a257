#pragma once

// Synthetic embedding datasets with controllable ID/OOD geometry.
//
// Prototypes (class, background, foreign) are unit vectors, exactly
// orthonormal when they fit in d dimensions. An image is N tokens: a
// contiguous object block of round(id_token_fraction * N) class-prototype
// tokens and background-prototype tokens elsewhere, each plus N(0, sigma^2)
// noise per coordinate. Its global feature is the token mean. Training
// images carry m simulated crops: a contiguous token window resampled back
// to N tokens with fresh noise.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "localprompt/feature_store.hpp"

namespace lp {

enum class OodMode { Far, Near, LocalOutlier };

std::string_view to_string(OodMode mode) noexcept;
OodMode parse_ood_mode(std::string_view text);

struct SynthSpec {
    std::size_t n_classes = 10;
    std::size_t dim = 64;
    std::size_t n_tokens = 16;
    std::size_t shots = 8;             // training images per class
    std::size_t test_per_class = 20;   // ID test images per class
    std::size_t ood_count = 200;       // OOD test images
    double id_token_fraction = 0.25;
    std::size_t n_background = 6;
    double noise_sigma = 0.1;
    OodMode ood_mode = OodMode::LocalOutlier;
    double near_epsilon = 0.5;         // near: prototype perturbation size
    std::size_t foreign_tokens = 1;    // local_outlier: tokens replaced
    std::size_t n_ood_classes = 10;    // far/local_outlier foreign prototypes
    std::size_t crops = 24;            // m
    // Crop window length range as fractions of N. Long windows make the
    // least-similar crop overlap the object.
    double crop_min_fraction = 0.125;
    double crop_max_fraction = 0.5;
    std::uint64_t seed = 0;

    bool operator==(const SynthSpec&) const = default;
};

// Throws SpecInvalid.
void validate(const SynthSpec& spec);

struct SynthDataset {
    DatasetSplit id_train;  // with crop sets
    DatasetSplit id_test;
    DatasetSplit ood_test;
    FeatureStore global_prompts;  // clean class prototypes, one record per class
};

SynthDataset generate(const SynthSpec& spec);

// key=value lines describing the spec (also written as the dataset manifest).
std::string format_spec(const SynthSpec& spec);

// Writes id_train.lpfs, id_test.lpfs, ood_test.lpfs, globals.lpfs (each with a
// .manifest sidecar) and synth.manifest into dir.
void write_dataset(const SynthDataset& data, const SynthSpec& spec,
                   const std::filesystem::path& dir);

}  // namespace lp
