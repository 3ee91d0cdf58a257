#include "localprompt/prompt_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string_view>

#include "binary_io.hpp"
#include "localprompt/error.hpp"
#include "localprompt/feature_store.hpp"
#include "localprompt/rng.hpp"

namespace lp {

namespace {

constexpr std::string_view kMagic = "LPBANK01";
constexpr std::uint32_t kVersion = 1;

}  // namespace

GradientBank zero_gradient(const PromptBank& bank) {
    return {Matrix(bank.local.rows(), bank.dim()), Matrix(bank.negative.rows(), bank.dim())};
}

void validate(const PromptBank& bank) {
    const std::size_t d = bank.dim();
    if (d == 0 || bank.local.rows() != bank.n_classes() || bank.local.cols() != d ||
        (!bank.negative.empty() && bank.negative.cols() != d)) {
        fail(ErrorCode::ShapeMismatch, "prompt bank: inconsistent shapes");
    }
    if (!all_finite(bank.global.values()) || !all_finite(bank.local.values()) ||
        !all_finite(bank.negative.values())) {
        fail(ErrorCode::ShapeMismatch, "prompt bank: non-finite entry");
    }
}

PromptBank init_bank(const Matrix& global_prompts, std::size_t n_classes, std::size_t dim,
                     std::size_t n_negative, std::uint64_t seed) {
    if (global_prompts.rows() != n_classes || global_prompts.cols() != dim || dim == 0) {
        fail(ErrorCode::ShapeMismatch, "init_bank: global prompts are " +
                                           std::to_string(global_prompts.rows()) + "x" +
                                           std::to_string(global_prompts.cols()) + ", expected " +
                                           std::to_string(n_classes) + "x" + std::to_string(dim));
    }
    PromptBank bank;
    bank.global = global_prompts;
    round_to_binary32(bank.global.values());
    bank.local = bank.global;
    bank.negative = Matrix(n_negative, dim);

    Rng rng(seed);
    for (std::size_t i = 0; i < n_negative; ++i) {
        auto row = bank.negative.row(i);
        double n = 0.0;
        while (n < kMinNorm) {
            for (double& v : row) {
                v = rng.normal();
            }
            n = norm(row);
        }
        for (double& v : row) {
            v /= n;
        }
    }
    round_to_binary32(bank.negative.values());
    validate(bank);
    return bank;
}

PromptBank swap_global_prompts(const PromptBank& bank, const Matrix& trained_globals) {
    if (trained_globals.rows() != bank.n_classes() || trained_globals.cols() != bank.dim()) {
        fail(ErrorCode::ShapeMismatch, "swap_global_prompts: expected " +
                                           std::to_string(bank.n_classes()) + "x" +
                                           std::to_string(bank.dim()) + " prompts");
    }
    PromptBank out = bank;
    out.global = trained_globals;
    validate(out);
    return out;
}

PromptBank without_negatives(const PromptBank& bank) {
    PromptBank out = bank;
    out.negative = Matrix(0, bank.dim());
    return out;
}

std::vector<std::uint8_t> encode_bank(const PromptBank& bank) {
    validate(bank);
    detail::ByteWriter w;
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(bank.dim()));
    w.u32(static_cast<std::uint32_t>(bank.n_classes()));
    w.u32(static_cast<std::uint32_t>(bank.n_negative()));
    for (const Matrix* m : {&bank.global, &bank.local, &bank.negative}) {
        for (double v : m->values()) {
            w.f32(static_cast<float>(v));
        }
    }
    auto& bytes = w.bytes();
    w.u32(crc32_of(std::span(bytes).subspan(kMagic.size())));
    return std::move(bytes);
}

PromptBank decode_bank(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) {
        fail(ErrorCode::TruncatedFile, "LPBANK: file shorter than magic");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        fail(ErrorCode::BadMagic, "LPBANK: bad magic");
    }
    detail::ByteReader in(bytes.subspan(kMagic.size()));
    const std::uint32_t version = in.u32();
    if (!in.ok()) {
        fail(ErrorCode::TruncatedFile, "LPBANK: header truncated");
    }
    if (version != kVersion) {
        fail(ErrorCode::VersionMismatch, "LPBANK: unsupported version " + std::to_string(version));
    }
    const std::size_t d = in.u32();
    const std::size_t c = in.u32();
    const std::size_t n_neg = in.u32();
    const std::size_t floats = (2 * c + n_neg) * d;
    if (!in.ok() || in.remaining() < floats * 4 + 4) {
        fail(ErrorCode::TruncatedFile, "LPBANK: payload truncated");
    }
    if (in.remaining() != floats * 4 + 4) {
        fail(ErrorCode::ShapeMismatch, "LPBANK: trailing bytes after payload");
    }
    PromptBank bank{Matrix(c, d), Matrix(c, d), Matrix(n_neg, d)};
    for (Matrix* m : {&bank.global, &bank.local, &bank.negative}) {
        for (double& v : m->values()) {
            v = static_cast<double>(in.f32());
        }
    }
    const std::uint32_t stored = in.u32();
    if (crc32_of(bytes.subspan(kMagic.size(), bytes.size() - kMagic.size() - 4)) != stored) {
        fail(ErrorCode::ChecksumMismatch, "LPBANK: CRC-32 mismatch");
    }
    validate(bank);
    return bank;
}

void save_bank(const PromptBank& bank, const std::filesystem::path& path) {
    write_file_bytes(path, encode_bank(bank));
}

PromptBank load_bank(const std::filesystem::path& path) {
    return decode_bank(read_file_bytes(path));
}

}  // namespace lp
