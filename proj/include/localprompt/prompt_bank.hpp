#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "localprompt/numerics.hpp"

namespace lp {

// Prompt features in embedding space:
//   global   - C frozen class prompts (hand-crafted template features)
//   local    - C learnable per-class prompts matched against local tokens
//   negative - N_neg learnable class-agnostic prompts that absorb outlier regions
struct PromptBank {
    Matrix global;
    Matrix local;
    Matrix negative;

    std::size_t dim() const noexcept { return global.cols(); }
    std::size_t n_classes() const noexcept { return global.rows(); }
    std::size_t n_negative() const noexcept { return negative.rows(); }

    bool operator==(const PromptBank&) const = default;
};

// d(loss)/d(local) and d(loss)/d(negative); same shapes as the bank.
struct GradientBank {
    Matrix d_local;
    Matrix d_negative;
};

GradientBank zero_gradient(const PromptBank& bank);

// Throws ShapeMismatch when shapes are inconsistent or entries non-finite.
void validate(const PromptBank& bank);

// Locals start as copies of the globals; negatives are seeded standard
// Gaussians scaled to unit norm. All values are rounded to binary32 so the
// bank round-trips through the checkpoint format exactly.
PromptBank init_bank(const Matrix& global_prompts, std::size_t n_classes, std::size_t dim,
                     std::size_t n_negative, std::uint64_t seed);

// Same bank with the global prompts replaced; locals and negatives untouched.
PromptBank swap_global_prompts(const PromptBank& bank, const Matrix& trained_globals);

// Copy with the negative prompts dropped (N_neg = 0).
PromptBank without_negatives(const PromptBank& bank);

// LPBANK01 checkpoint: magic, u32 version, d, C, N_neg, then global, local and
// negative rows as binary32, then CRC-32 of the bytes after the magic.
std::vector<std::uint8_t> encode_bank(const PromptBank& bank);
PromptBank decode_bank(std::span<const std::uint8_t> bytes);
void save_bank(const PromptBank& bank, const std::filesystem::path& path);
PromptBank load_bank(const std::filesystem::path& path);

}  // namespace lp
