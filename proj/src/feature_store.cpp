#include "localprompt/feature_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "localprompt/error.hpp"
#include "localprompt/rng.hpp"

namespace lp {

namespace {

constexpr std::string_view kMagic = "LPFSTOR1";
constexpr std::uint32_t kVersion = 1;

void validate_record(const FeatureRecord& rec, const FeatureStore& store) {
    if (rec.global.size() != store.d || rec.locals.cols() != store.d) {
        fail(ErrorCode::DimensionMismatch, "record '" + rec.image_id + "': vector length != d");
    }
    if (rec.locals.rows() != store.n_tokens) {
        fail(ErrorCode::DimensionMismatch, "record '" + rec.image_id + "': token count != N");
    }
    if (rec.label < kOodLabel || rec.label >= static_cast<std::int64_t>(store.n_classes)) {
        fail(ErrorCode::InvalidLabel, "record '" + rec.image_id + "': label out of range");
    }
    if (!all_finite(rec.global) || !all_finite(rec.locals.values())) {
        fail(ErrorCode::NonFiniteValue, "record '" + rec.image_id + "': non-finite entry");
    }
}

void encode_record(detail::ByteWriter& w, const FeatureRecord& rec) {
    w.str(rec.image_id);
    w.i32(rec.label);
    for (double v : rec.global) {
        w.f32(static_cast<float>(v));
    }
    for (double v : rec.locals.values()) {
        w.f32(static_cast<float>(v));
    }
}

struct Decoder {
    detail::ByteReader in;
    std::uint32_t d = 0;
    std::uint32_t n = 0;

    double value() {
        const float f = in.f32();
        if (in.ok() && !std::isfinite(f)) {
            fail(ErrorCode::NonFiniteValue, "LPFS: non-finite value at byte " +
                                                std::to_string(in.position() - 4));
        }
        return static_cast<double>(f);
    }

    FeatureRecord record() {
        FeatureRecord rec;
        rec.image_id = in.str();
        rec.label = in.i32();
        const std::size_t floats = static_cast<std::size_t>(n + 1) * d;
        if (!in.ok() || floats * 4 > in.remaining()) {
            in.poison();
            return rec;
        }
        rec.global.resize(d);
        for (auto& v : rec.global) {
            v = value();
        }
        rec.locals = Matrix(n, d);
        for (auto& v : rec.locals.values()) {
            v = value();
        }
        return rec;
    }
};

}  // namespace

std::string_view to_string(SplitRole role) noexcept {
    switch (role) {
        case SplitRole::IdTrain: return "id_train";
        case SplitRole::IdTest: return "id_test";
        case SplitRole::OodTest: return "ood_test";
    }
    return "unknown";
}

SplitRole parse_split_role(std::string_view text) {
    if (text == "id_train") return SplitRole::IdTrain;
    if (text == "id_test") return SplitRole::IdTest;
    if (text == "ood_test") return SplitRole::OodTest;
    fail(ErrorCode::Usage, "unknown split role '" + std::string(text) + "'");
}

void validate(const FeatureStore& store) {
    if (store.n_tokens < 1 || store.d < 1) {
        fail(ErrorCode::DimensionMismatch, "store: d and N must be >= 1");
    }
    if (store.class_names.size() != store.n_classes) {
        fail(ErrorCode::DimensionMismatch, "store: class_names length != C");
    }
    for (const auto& rec : store.records) {
        validate_record(rec, store);
    }
    for (const auto& set : store.crop_sets) {
        if (set.label < 0 || set.label >= static_cast<std::int64_t>(store.n_classes)) {
            fail(ErrorCode::InvalidLabel, "crop set '" + set.parent_image_id + "': label out of range");
        }
        for (const auto& c : set.candidates) {
            validate_record(c, store);
            if (c.label != set.label) {
                fail(ErrorCode::InvalidLabel,
                     "crop set '" + set.parent_image_id + "': candidate label differs from parent");
            }
        }
    }
}

void validate(const DatasetSplit& split, bool require_crops) {
    validate(split.store);
    for (const auto& rec : split.store.records) {
        const bool ood = rec.label == kOodLabel;
        if ((split.role == SplitRole::OodTest) != ood) {
            fail(ErrorCode::InvalidLabel, "record '" + rec.image_id + "': label " +
                                              std::to_string(rec.label) + " invalid for role " +
                                              std::string(to_string(split.role)));
        }
    }
    if (require_crops && split.role == SplitRole::IdTrain && split.store.crop_sets.empty()) {
        fail(ErrorCode::MissingCropSets, "id_train split carries no crop candidate sets");
    }
}

std::vector<std::uint8_t> encode_store(const FeatureStore& store) {
    validate(store);
    detail::ByteWriter w;
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kVersion);
    w.u32(store.d);
    w.u32(store.n_tokens);
    w.u32(store.n_classes);
    w.u32(static_cast<std::uint32_t>(store.records.size()));
    w.u32(static_cast<std::uint32_t>(store.crop_sets.size()));
    for (const auto& name : store.class_names) {
        w.str(name);
    }
    for (const auto& rec : store.records) {
        encode_record(w, rec);
    }
    for (const auto& set : store.crop_sets) {
        w.str(set.parent_image_id);
        w.i32(set.label);
        w.u32(static_cast<std::uint32_t>(set.candidates.size()));
        for (const auto& c : set.candidates) {
            encode_record(w, c);
        }
    }
    auto& bytes = w.bytes();
    const std::uint32_t crc = crc32_of(std::span(bytes).subspan(kMagic.size()));
    w.u32(crc);
    return std::move(bytes);
}

FeatureStore decode_store(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) {
        fail(ErrorCode::TruncatedFile, "LPFS: file shorter than magic");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        fail(ErrorCode::BadMagic, "LPFS: bad magic");
    }
    constexpr std::size_t kHeader = 6 * 4;
    if (bytes.size() < kMagic.size() + kHeader + 4) {
        fail(ErrorCode::TruncatedFile, "LPFS: header truncated");
    }
    const auto payload = bytes.subspan(kMagic.size(), bytes.size() - kMagic.size() - 4);
    std::uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    const bool crc_ok = crc32_of(payload) == stored_crc;
    // With an intact checksum a layout overrun means the declared shapes do
    // not match the payload; otherwise the file was cut short.
    const auto overrun = [&](const char* where) {
        fail(crc_ok ? ErrorCode::DimensionMismatch : ErrorCode::TruncatedFile,
             std::string("LPFS: payload does not fit declared shapes in ") + where);
    };

    Decoder dec{detail::ByteReader(payload)};
    FeatureStore store;
    const std::uint32_t version = dec.in.u32();
    if (version != kVersion) {
        fail(ErrorCode::VersionMismatch, "LPFS: unsupported version " + std::to_string(version));
    }
    store.d = dec.d = dec.in.u32();
    store.n_tokens = dec.n = dec.in.u32();
    store.n_classes = dec.in.u32();
    const std::uint32_t n_records = dec.in.u32();
    const std::uint32_t n_sets = dec.in.u32();

    for (std::uint32_t i = 0; i < store.n_classes && dec.in.ok(); ++i) {
        store.class_names.push_back(dec.in.str());
    }
    if (!dec.in.ok()) overrun("class names");

    const std::size_t min_record = 8 + static_cast<std::size_t>(store.n_tokens + 1) * store.d * 4;
    store.records.reserve(std::min<std::size_t>(n_records, dec.in.remaining() / std::max<std::size_t>(min_record, 1)));
    for (std::uint32_t i = 0; i < n_records; ++i) {
        store.records.push_back(dec.record());
        if (!dec.in.ok()) overrun("records");
    }
    for (std::uint32_t s = 0; s < n_sets; ++s) {
        CropCandidateSet set;
        set.parent_image_id = dec.in.str();
        set.label = dec.in.i32();
        const std::uint32_t m = dec.in.u32();
        if (!dec.in.ok()) overrun("crop sets");
        for (std::uint32_t j = 0; j < m; ++j) {
            set.candidates.push_back(dec.record());
            if (!dec.in.ok()) overrun("crop sets");
        }
        store.crop_sets.push_back(std::move(set));
    }
    if (dec.in.remaining() != 0) {
        overrun("trailer");
    }
    if (!crc_ok) {
        fail(ErrorCode::ChecksumMismatch, "LPFS: CRC-32 mismatch");
    }
    validate(store);
    return store;
}

std::filesystem::path manifest_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".manifest";
    return p;
}

void write_store(const FeatureStore& store, const std::filesystem::path& path,
                 std::optional<SplitRole> role) {
    const auto bytes = encode_store(store);
    write_file_bytes(path, bytes);

    std::ofstream m(manifest_path(path), std::ios::trunc);
    m << "format=LPFS\n"
      << "version=" << kVersion << '\n'
      << "role=" << (role ? to_string(*role) : std::string_view("unspecified")) << '\n'
      << "d=" << store.d << '\n'
      << "N=" << store.n_tokens << '\n'
      << "C=" << store.n_classes << '\n'
      << "record_count=" << store.records.size() << '\n'
      << "crop_set_count=" << store.crop_sets.size() << '\n';
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", crc32_of(bytes));
    m << "crc32=" << crc << '\n';
    if (!m) {
        fail(ErrorCode::IoFailure, "cannot write manifest for " + path.string());
    }
}

FeatureStore read_store(const std::filesystem::path& path) {
    return decode_store(read_file_bytes(path));
}

void write_split(const DatasetSplit& split, const std::filesystem::path& path) {
    validate(split);
    write_store(split.store, path, split.role);
}

DatasetSplit read_split(const std::filesystem::path& path, SplitRole fallback) {
    DatasetSplit split{fallback, read_store(path)};
    std::ifstream m(manifest_path(path));
    std::string line;
    while (std::getline(m, line)) {
        if (line.rfind("role=", 0) == 0 && line.substr(5) != "unspecified") {
            split.role = parse_split_role(line.substr(5));
        }
    }
    validate(split);
    return split;
}

FeatureStore few_shot_subsample(const FeatureStore& store, std::size_t shots, std::uint64_t seed) {
    if (shots == 0) {
        fail(ErrorCode::InvalidConfig, "few_shot_subsample: shots must be >= 1");
    }
    std::vector<std::vector<std::size_t>> by_class(store.n_classes);
    for (std::size_t i = 0; i < store.records.size(); ++i) {
        const auto label = store.records[i].label;
        if (label >= 0) {
            by_class[static_cast<std::size_t>(label)].push_back(i);
        }
    }
    Rng rng(seed);
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) {
            fail(ErrorCode::EmptyClass, "few_shot_subsample: class " + std::to_string(c) + " is empty");
        }
        rng.shuffle(std::span(idx));
        idx.resize(std::min(idx.size(), shots));
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());

    FeatureStore out;
    out.d = store.d;
    out.n_tokens = store.n_tokens;
    out.n_classes = store.n_classes;
    out.class_names = store.class_names;
    std::set<std::string> kept_ids;
    for (std::size_t i : keep) {
        out.records.push_back(store.records[i]);
        kept_ids.insert(store.records[i].image_id);
    }
    for (const auto& set : store.crop_sets) {
        if (kept_ids.contains(set.parent_image_id)) {
            out.crop_sets.push_back(set);
        }
    }
    return out;
}

FeatureStore make_prompt_store(const Matrix& prompts, std::vector<std::string> class_names) {
    if (class_names.size() != prompts.rows()) {
        fail(ErrorCode::ShapeMismatch, "prompt store: class_names length != prompt count");
    }
    FeatureStore s;
    s.d = static_cast<std::uint32_t>(prompts.cols());
    s.n_tokens = 1;
    s.n_classes = static_cast<std::uint32_t>(prompts.rows());
    for (std::size_t c = 0; c < prompts.rows(); ++c) {
        FeatureRecord rec;
        rec.image_id = class_names[c];
        rec.label = static_cast<std::int32_t>(c);
        rec.global.assign(prompts.row(c).begin(), prompts.row(c).end());
        rec.locals.push_row(prompts.row(c));
        s.records.push_back(std::move(rec));
    }
    s.class_names = std::move(class_names);
    return s;
}

Matrix prompts_from_store(const FeatureStore& store) {
    if (store.records.size() != store.n_classes) {
        fail(ErrorCode::ShapeMismatch, "prompt store: expected one record per class");
    }
    Matrix prompts(store.n_classes, store.d);
    for (std::size_t c = 0; c < store.records.size(); ++c) {
        const auto& rec = store.records[c];
        if (rec.label != static_cast<std::int32_t>(c)) {
            fail(ErrorCode::ShapeMismatch, "prompt store: record " + std::to_string(c) +
                                               " carries label " + std::to_string(rec.label));
        }
        std::copy(rec.global.begin(), rec.global.end(), prompts.row(c).begin());
    }
    return prompts;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const std::size_t n = std::min(kChunk, bytes.size() - off);
        crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoFailure, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorCode::IoFailure, "cannot write " + path.string());
    }
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
    return crc32_of(read_file_bytes(path));
}

}  // namespace lp
