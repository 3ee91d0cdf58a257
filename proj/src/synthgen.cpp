#include "localprompt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "localprompt/error.hpp"
#include "localprompt/rng.hpp"

namespace lp {

namespace {

enum Stream : std::uint64_t { kPrototypes = 1, kTrain = 2, kTest = 3, kOod = 4 };

void random_unit(Rng& rng, std::span<double> out) {
    double n = 0.0;
    while (n < 1e-6) {
        for (double& v : out) {
            v = rng.normal();
        }
        n = norm(out);
    }
    for (double& v : out) {
        v /= n;
    }
}

// Rows are unit vectors; the first min(rows, d) are mutually orthogonal.
Matrix draw_prototypes(Rng& rng, std::size_t rows, std::size_t d) {
    Matrix p(rows, d);
    for (std::size_t r = 0; r < rows; ++r) {
        auto v = p.row(r);
        random_unit(rng, v);
        if (r < d) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t q = 0; q < r; ++q) {
                    const double proj = dot(v, p.row(q));
                    const auto u = p.row(q);
                    for (std::size_t c = 0; c < d; ++c) {
                        v[c] -= proj * u[c];
                    }
                }
            }
            const double n = norm(v);
            for (double& x : v) {
                x /= n;
            }
        }
    }
    return p;
}

struct Generator {
    const SynthSpec& spec;
    Matrix table;  // class | background | foreign | near prototypes
    std::size_t bg_offset = 0;
    std::size_t foreign_offset = 0;
    std::size_t near_offset = 0;

    explicit Generator(const SynthSpec& s) : spec(s) {
        const std::size_t c = s.n_classes;
        const std::size_t b = s.n_background;
        const std::size_t f = s.n_ood_classes;
        Rng rng(mix_seed(s.seed, kPrototypes));
        Matrix base = draw_prototypes(rng, c + b + f, s.dim);
        bg_offset = c;
        foreign_offset = c + b;
        near_offset = c + b + f;
        table = Matrix(c + b + 2 * f, s.dim);
        std::copy(base.values().begin(), base.values().end(), table.values().begin());
        for (std::size_t o = 0; o < f; ++o) {
            auto v = table.row(near_offset + o);
            Vec u(s.dim);
            random_unit(rng, u);
            const auto anchor = table.row(o % c);
            for (std::size_t k = 0; k < s.dim; ++k) {
                v[k] = anchor[k] + s.near_epsilon * u[k];
            }
            const double n = norm(v);
            for (double& x : v) {
                x /= n;
            }
        }
    }

    // Prototype index of every token of one image.
    std::vector<std::size_t> layout(Rng& rng, std::size_t object) const {
        const std::size_t n = spec.n_tokens;
        const auto n_obj = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(spec.id_token_fraction * static_cast<double>(n))), 1, n);
        const auto start = static_cast<std::size_t>(rng.below(n - n_obj + 1));
        std::vector<std::size_t> src(n);
        for (std::size_t h = 0; h < n; ++h) {
            src[h] = (h >= start && h < start + n_obj)
                         ? object
                         : bg_offset + static_cast<std::size_t>(rng.below(spec.n_background));
        }
        return src;
    }

    FeatureRecord render(Rng& rng, const std::vector<std::size_t>& src, std::string id,
                         std::int32_t label) const {
        FeatureRecord rec;
        rec.image_id = std::move(id);
        rec.label = label;
        rec.locals = Matrix(src.size(), spec.dim);
        rec.global.assign(spec.dim, 0.0);
        for (std::size_t h = 0; h < src.size(); ++h) {
            auto tok = rec.locals.row(h);
            const auto proto = table.row(src[h]);
            for (std::size_t k = 0; k < spec.dim; ++k) {
                tok[k] = proto[k] + spec.noise_sigma * rng.normal();
            }
            round_to_binary32(tok);
            for (std::size_t k = 0; k < spec.dim; ++k) {
                rec.global[k] += tok[k];
            }
        }
        for (double& v : rec.global) {
            v /= static_cast<double>(src.size());
        }
        round_to_binary32(rec.global);
        return rec;
    }

    CropCandidateSet crops(Rng& rng, const std::vector<std::size_t>& src, const std::string& parent,
                           std::int32_t label) const {
        const std::size_t n = spec.n_tokens;
        const auto width = [n](double f) {
            return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(f * static_cast<double>(n))), 1, n);
        };
        const std::size_t min_w = width(spec.crop_min_fraction);
        const std::size_t max_w = std::max(min_w, width(spec.crop_max_fraction));
        CropCandidateSet set{parent, label, {}};
        char suffix[32];
        for (std::size_t j = 0; j < spec.crops; ++j) {
            const std::size_t w = min_w + static_cast<std::size_t>(rng.below(max_w - min_w + 1));
            const std::size_t s = static_cast<std::size_t>(rng.below(n - w + 1));
            std::vector<std::size_t> window(n);
            for (std::size_t h = 0; h < n; ++h) {
                window[h] = src[s + h * w / n];
            }
            std::snprintf(suffix, sizeof suffix, "_crop%03zu", j);
            set.candidates.push_back(render(rng, window, parent + suffix, label));
        }
        return set;
    }
};

std::string image_id(const char* prefix, std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_%06zu", prefix, i);
    return buf;
}

FeatureStore empty_store(const SynthSpec& spec) {
    FeatureStore s;
    s.d = static_cast<std::uint32_t>(spec.dim);
    s.n_tokens = static_cast<std::uint32_t>(spec.n_tokens);
    s.n_classes = static_cast<std::uint32_t>(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        s.class_names.push_back("class_" + std::to_string(c));
    }
    return s;
}

}  // namespace

std::string_view to_string(OodMode mode) noexcept {
    switch (mode) {
        case OodMode::Far: return "far";
        case OodMode::Near: return "near";
        case OodMode::LocalOutlier: return "local_outlier";
    }
    return "unknown";
}

OodMode parse_ood_mode(std::string_view text) {
    if (text == "far") return OodMode::Far;
    if (text == "near") return OodMode::Near;
    if (text == "local_outlier") return OodMode::LocalOutlier;
    fail(ErrorCode::SpecInvalid, "unknown ood mode '" + std::string(text) + "'");
}

void validate(const SynthSpec& s) {
    const auto bad = [](const std::string& msg) { fail(ErrorCode::SpecInvalid, msg); };
    if (s.n_classes == 0 || s.dim == 0 || s.n_tokens == 0) bad("C, d and N must be positive");
    if (s.shots == 0 || s.test_per_class == 0 || s.ood_count == 0) bad("image counts must be positive");
    if (!(s.id_token_fraction > 0.0 && s.id_token_fraction <= 1.0)) bad("id_token_fraction must lie in (0, 1]");
    if (!(s.noise_sigma >= 0.0) || !std::isfinite(s.noise_sigma)) bad("noise_sigma must be >= 0");
    if (!(s.near_epsilon >= 0.0) || !std::isfinite(s.near_epsilon)) bad("near_epsilon must be >= 0");
    if (s.n_background == 0 && s.id_token_fraction < 1.0) bad("background prototypes required when id_token_fraction < 1");
    if (s.n_ood_classes == 0) bad("n_ood_classes must be positive");
    if (s.crops == 0) bad("crops must be positive");
    if (!(s.crop_min_fraction > 0.0 && s.crop_min_fraction <= s.crop_max_fraction && s.crop_max_fraction <= 1.0)) {
        bad("crop fractions must satisfy 0 < min <= max <= 1");
    }
    if (s.ood_mode == OodMode::LocalOutlier && (s.foreign_tokens == 0 || s.foreign_tokens > s.n_tokens)) {
        bad("foreign_tokens must lie in [1, N]");
    }
}

SynthDataset generate(const SynthSpec& spec) {
    validate(spec);
    const Generator gen(spec);
    SynthDataset out;
    out.id_train = {SplitRole::IdTrain, empty_store(spec)};
    out.id_test = {SplitRole::IdTest, empty_store(spec)};
    out.ood_test = {SplitRole::OodTest, empty_store(spec)};

    std::size_t idx = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t i = 0; i < spec.shots; ++i, ++idx) {
            Rng rng(mix_seed(spec.seed, (kTrain << 40) | idx));
            const auto src = gen.layout(rng, c);
            const auto id = image_id("train", idx);
            const auto label = static_cast<std::int32_t>(c);
            out.id_train.store.records.push_back(gen.render(rng, src, id, label));
            out.id_train.store.crop_sets.push_back(gen.crops(rng, src, id, label));
        }
    }
    idx = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t i = 0; i < spec.test_per_class; ++i, ++idx) {
            Rng rng(mix_seed(spec.seed, (kTest << 40) | idx));
            const auto src = gen.layout(rng, c);
            out.id_test.store.records.push_back(
                gen.render(rng, src, image_id("test", idx), static_cast<std::int32_t>(c)));
        }
    }
    for (std::size_t i = 0; i < spec.ood_count; ++i) {
        Rng rng(mix_seed(spec.seed, (kOod << 40) | i));
        const auto o = static_cast<std::size_t>(rng.below(spec.n_ood_classes));
        std::vector<std::size_t> src;
        switch (spec.ood_mode) {
            case OodMode::Far:
                src = gen.layout(rng, gen.foreign_offset + o);
                break;
            case OodMode::Near:
                src = gen.layout(rng, gen.near_offset + o);
                break;
            case OodMode::LocalOutlier: {
                // An ID-looking image whose object block has a short run of
                // foreign tokens.
                const auto c = static_cast<std::size_t>(rng.below(spec.n_classes));
                src = gen.layout(rng, c);
                const auto first = static_cast<std::size_t>(std::find(src.begin(), src.end(), c) - src.begin());
                const auto n_obj = static_cast<std::size_t>(std::count(src.begin(), src.end(), c));
                const std::size_t run = std::min(spec.foreign_tokens, spec.n_tokens);
                std::size_t start;
                if (run <= n_obj) {
                    start = first + static_cast<std::size_t>(rng.below(n_obj - run + 1));
                } else {
                    start = std::min(first, spec.n_tokens - run);
                }
                for (std::size_t h = start; h < start + run; ++h) {
                    src[h] = gen.foreign_offset + o;
                }
                break;
            }
        }
        out.ood_test.store.records.push_back(gen.render(rng, src, image_id("ood", i), kOodLabel));
    }

    Matrix clean(spec.n_classes, spec.dim);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        std::copy(gen.table.row(c).begin(), gen.table.row(c).end(), clean.row(c).begin());
    }
    round_to_binary32(clean.values());
    out.global_prompts = make_prompt_store(clean, empty_store(spec).class_names);
    return out;
}

std::string format_spec(const SynthSpec& s) {
    std::ostringstream out;
    out.precision(17);
    out << "classes=" << s.n_classes << "\ndim=" << s.dim << "\ntokens=" << s.n_tokens
        << "\nshots=" << s.shots << "\ntest_per_class=" << s.test_per_class
        << "\nood_count=" << s.ood_count << "\nid_token_fraction=" << s.id_token_fraction
        << "\nbackground=" << s.n_background << "\nnoise_sigma=" << s.noise_sigma
        << "\nood_mode=" << to_string(s.ood_mode) << "\nnear_epsilon=" << s.near_epsilon
        << "\nforeign_tokens=" << s.foreign_tokens << "\nood_classes=" << s.n_ood_classes
        << "\ncrops=" << s.crops << "\ncrop_min_fraction=" << s.crop_min_fraction
        << "\ncrop_max_fraction=" << s.crop_max_fraction << "\nseed=" << s.seed << '\n';
    return out.str();
}

void write_dataset(const SynthDataset& data, const SynthSpec& spec,
                   const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_split(data.id_train, dir / "id_train.lpfs");
    write_split(data.id_test, dir / "id_test.lpfs");
    write_split(data.ood_test, dir / "ood_test.lpfs");
    write_store(data.global_prompts, dir / "globals.lpfs");
    std::ofstream m(dir / "synth.manifest", std::ios::trunc);
    m << format_spec(spec);
    if (!m) {
        fail(ErrorCode::IoFailure, "cannot write " + (dir / "synth.manifest").string());
    }
}

}  // namespace lp
