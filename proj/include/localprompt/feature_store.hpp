#pragma once

// In-memory model and the LPFS v1 on-disk format for embedding datasets.
//
// Layout (all integers little-endian):
//   "LPFSTOR1"
//   u32 version, d, N, C, record_count, crop_set_count
//   C x string                              class names
//   record_count x record
//   crop_set_count x { string parent_id, i32 label, u32 m, m x record }
//   u32 CRC-32 of every byte between the magic and this trailer
// where string = u32 byte length + UTF-8 bytes and
//       record = string image_id, i32 label, (1+N)*d binary32 (global first).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "localprompt/numerics.hpp"

namespace lp {

inline constexpr std::int32_t kOodLabel = -1;

struct FeatureRecord {
    std::string image_id;
    std::int32_t label = kOodLabel;
    Vec global;     // z^g, length d
    Matrix locals;  // z^l, N x d

    bool operator==(const FeatureRecord&) const = default;
};

struct CropCandidateSet {
    std::string parent_image_id;
    std::int32_t label = 0;
    std::vector<FeatureRecord> candidates;

    bool operator==(const CropCandidateSet&) const = default;
};

struct FeatureStore {
    std::uint32_t d = 0;
    std::uint32_t n_tokens = 0;
    std::uint32_t n_classes = 0;
    std::vector<std::string> class_names;
    std::vector<FeatureRecord> records;
    std::vector<CropCandidateSet> crop_sets;

    bool operator==(const FeatureStore&) const = default;
};

enum class SplitRole { IdTrain, IdTest, OodTest };

std::string_view to_string(SplitRole role) noexcept;
SplitRole parse_split_role(std::string_view text);

struct DatasetSplit {
    SplitRole role = SplitRole::IdTest;
    FeatureStore store;
};

// Throws DimensionMismatch, InvalidLabel or NonFiniteValue on the first
// violated invariant.
void validate(const FeatureStore& store);
// Additionally: ood_test labels are all -1; id_train must carry crop sets
// when require_crops is set (MissingCropSets).
void validate(const DatasetSplit& split, bool require_crops = false);

std::vector<std::uint8_t> encode_store(const FeatureStore& store);
FeatureStore decode_store(std::span<const std::uint8_t> bytes);

// Writes the LPFS file and a "<path>.manifest" sidecar of key=value lines.
void write_store(const FeatureStore& store, const std::filesystem::path& path,
                 std::optional<SplitRole> role = std::nullopt);
FeatureStore read_store(const std::filesystem::path& path);

void write_split(const DatasetSplit& split, const std::filesystem::path& path);
// Role comes from the sidecar manifest when present, else from fallback.
DatasetSplit read_split(const std::filesystem::path& path, SplitRole fallback);

std::filesystem::path manifest_path(const std::filesystem::path& path);

// At most `shots` records per class chosen by a seeded shuffle, kept in their
// original order; crop sets restricted to the surviving parents.
// Throws EmptyClass if some class in [0, C) has no record.
FeatureStore few_shot_subsample(const FeatureStore& store, std::size_t shots, std::uint64_t seed);

// Prompt files reuse LPFS: one record per class (label c at position c),
// N = 1, the prompt feature stored as both global and sole local token.
FeatureStore make_prompt_store(const Matrix& prompts, std::vector<std::string> class_names);
Matrix prompts_from_store(const FeatureStore& store);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept;
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace lp
