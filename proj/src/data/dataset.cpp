#include <algorithm>
#include <cmath>
#include <map>

#include "scp/data.hpp"

namespace scp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- SliceDataset

SliceDataset SliceDataset::load(const fs::path& manifest_file, int target_size) {
    return load(load_manifest(manifest_file), manifest_file.parent_path(), target_size);
}

SliceDataset SliceDataset::load(DatasetManifest manifest, const fs::path& root, int target_size) {
    std::vector<CaseVolume> volumes;
    volumes.reserve(manifest.cases.size());
    for (const auto& c : manifest.cases) {
        auto v = ingest_case(root / c.path);
        v.case_id = c.case_id;
        if (v.shape != c.shape) throw FormatError("case '" + c.case_id + "': volume shape disagrees with manifest");
        if (v.class_count != manifest.class_count) {
            throw FormatError("case '" + c.case_id + "': class_count disagrees with manifest");
        }
        if (v.has_label() != c.has_label) {
            throw FormatError("case '" + c.case_id + "': label presence disagrees with manifest");
        }
        volumes.push_back(std::move(v));
    }
    return from_cases(std::move(manifest), volumes, target_size);
}

SliceDataset SliceDataset::from_cases(DatasetManifest manifest, const std::vector<CaseVolume>& volumes,
                                      int target_size) {
    manifest.validate();
    SliceDataset ds;
    ds.manifest_ = std::move(manifest);
    ds.target_size_ = target_size;

    std::map<std::string, const CaseVolume*> by_id;
    for (const auto& v : volumes) by_id[v.case_id] = &v;

    for (const auto& entry : ds.manifest_.cases) {
        auto it = by_id.find(entry.case_id);
        if (it == by_id.end()) throw InvalidInput("SliceDataset: no volume for case '" + entry.case_id + "'");
        const CaseVolume& v = *it->second;
        PreparedCase pc;
        pc.case_id = v.case_id;
        pc.spacing_mm = {v.spacing_mm[0], v.spacing_mm[1] * v.shape[1] / target_size,
                         v.spacing_mm[2] * v.shape[2] / target_size};
        for (int s = 0; s < v.slices(); ++s) {
            auto pre = preprocess_slice(v.slice(s), v.shape[1], v.shape[2], v.label_slice(s), v.class_count,
                                        target_size);
            pc.images.push_back(std::move(pre.image));
            if (pre.label) pc.labels.push_back(std::move(*pre.label));
        }
        ds.cases_.push_back(std::move(pc));
    }

    for (const auto& id : ds.manifest_.labeled_case_ids) {
        const auto& pc = ds.prepared(id);
        for (int s = 0; s < pc.slices(); ++s) {
            ds.labeled_.push_back({pc.images[s], one_hot_from_labels(pc.labels[s], ds.class_count()), id, s});
        }
    }
    for (const auto& id : ds.manifest_.unlabeled_case_ids()) {
        const auto& pc = ds.prepared(id);
        for (int s = 0; s < pc.slices(); ++s) ds.unlabeled_.push_back({pc.images[s], id, s});
    }
    return ds;
}

const PreparedCase& SliceDataset::prepared(const std::string& case_id) const {
    for (const auto& c : cases_) {
        if (c.case_id == case_id) return c;
    }
    throw InvalidInput("SliceDataset: unknown case '" + case_id + "'");
}

std::vector<const PreparedCase*> SliceDataset::split_cases(const std::string& split) const {
    std::vector<const PreparedCase*> out;
    for (const auto& id : manifest_.split(split)) out.push_back(&prepared(id));
    return out;
}

// ---------------------------------------------------------------- batches

Batch compose_batch(const SliceDataset& data, const BatchComposition& composition, std::mt19937_64& rng,
                    const AugmentOptions& augmentation) {
    if (composition.labeled < 0 || composition.unlabeled < 0) throw InvalidInput("compose_batch: negative count");
    const auto& lpool = data.labeled_pool();
    const auto& upool = data.unlabeled_pool();
    if (lpool.empty()) throw InvalidInput("compose_batch: the labeled pool is empty");
    if (composition.unlabeled > 0 && upool.empty()) throw InvalidInput("compose_batch: the unlabeled pool is empty");

    Batch batch;
    batch.labeled.reserve(composition.labeled);
    batch.unlabeled.reserve(composition.unlabeled);
    std::uniform_int_distribution<std::size_t> pick_l(0, lpool.size() - 1);
    for (int i = 0; i < composition.labeled; ++i) {
        LabeledSample s = lpool[pick_l(rng)];
        auto draw = draw_augmentation(rng, augmentation);
        auto labels = argmax_labels(tensor_cast<double>(s.label));
        apply_augmentation(draw, s.image, &labels);
        s.label = one_hot_from_labels(labels, s.label.channels());
        batch.labeled.push_back(std::move(s));
    }
    if (composition.unlabeled > 0) {
        std::uniform_int_distribution<std::size_t> pick_u(0, upool.size() - 1);
        for (int i = 0; i < composition.unlabeled; ++i) {
            UnlabeledSample s = upool[pick_u(rng)];
            apply_augmentation(draw_augmentation(rng, augmentation), s.image, nullptr);
            batch.unlabeled.push_back(std::move(s));
        }
    }
    return batch;
}

// ---------------------------------------------------------------- synthetic data

namespace {

struct BlobShape {
    double cy, cx, cz;
    double radius;
    double half_depth;
    double aspect;  // x-axis stretch
    double tilt;
    double a2, a3, p2, p3;

    // Boundary radius along the direction (dy, dx) at slice z; <= 0 outside the blob's extent.
    double signed_distance(double y, double x, double z) const {
        const double dz = (z - cz) / half_depth;
        if (std::abs(dz) >= 1.0) return -1e9;
        const double r = radius * std::sqrt(1.0 - dz * dz);
        const double ry = y - cy, rx = x - cx;
        const double u = std::cos(tilt) * rx + std::sin(tilt) * ry;
        const double v = -std::sin(tilt) * rx + std::cos(tilt) * ry;
        const double dist = std::hypot(u / aspect, v);
        const double theta = std::atan2(v, u);
        const double boundary = r * (1.0 + a2 * std::cos(2 * theta + p2) + a3 * std::cos(3 * theta + p3));
        return boundary - dist;
    }
};

BlobShape random_blob(std::mt19937_64& rng, int size, int slices, double rmin, double rmax, double max_aspect) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BlobShape b{};
    b.cy = size * (0.3 + 0.4 * u(rng));
    b.cx = size * (0.3 + 0.4 * u(rng));
    b.cz = (slices - 1) * (0.35 + 0.3 * u(rng));
    b.radius = size * (rmin + (rmax - rmin) * u(rng));
    b.half_depth = std::max(1.5, slices * (0.55 + 0.3 * u(rng)));
    b.aspect = 1.0 + (max_aspect - 1.0) * u(rng);
    b.tilt = M_PI * u(rng);
    b.a2 = 0.15 * u(rng);
    b.a3 = 0.1 * u(rng);
    b.p2 = 2 * M_PI * u(rng);
    b.p3 = 2 * M_PI * u(rng);
    return b;
}

double soft_inside(double signed_distance) { return 1.0 / (1.0 + std::exp(-signed_distance / 0.8)); }

}  // namespace

CaseVolume synthesize_case(const SynthesisSpec& spec, const std::string& case_id, std::mt19937_64& rng) {
    const int n = spec.size, depth = spec.slices, classes = spec.classes;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise);

    CaseVolume v;
    v.case_id = case_id;
    v.shape = {depth, n, n};
    v.class_count = classes;
    const double in_plane = 1.2 + 0.6 * u(rng);
    v.spacing_mm = {4.0 + 2.0 * u(rng), in_plane, in_plane};

    // Smooth background: a few low-frequency plane waves.
    const double base = 0.2 + 0.2 * u(rng);
    struct Wave { double fy, fx, fz, phase, amp; };
    std::vector<Wave> waves(4);
    for (auto& w : waves) {
        w = {(0.5 + 2.0 * u(rng)) / n, (0.5 + 2.0 * u(rng)) / n, (0.2 + 0.5 * u(rng)) / depth, 2 * M_PI * u(rng),
             0.03 + 0.05 * u(rng)};
    }

    // Foreground: class 1 is the main blob; class 2 (when present) a core nested inside it;
    // further classes are separate blobs. Contrast varies widely between cases.
    std::vector<BlobShape> blobs;
    std::vector<double> contrast;
    const BlobShape main = random_blob(rng, n, depth, 0.14, 0.24, 1.4);
    for (int c = 1; c < classes; ++c) {
        if (c == 1) {
            blobs.push_back(main);
        } else if (c == 2) {
            BlobShape core = main;
            core.radius *= 0.5;
            core.a2 *= 0.5;
            core.a3 *= 0.5;
            blobs.push_back(core);
        } else {
            blobs.push_back(random_blob(rng, n, depth, 0.06, 0.1, 1.3));
        }
        contrast.push_back((c % 2 == 1 ? 1.0 : -0.6) * (0.15 + 0.4 * u(rng)));
    }
    // Distractors: unlabeled blobs of similar size, brighter or darker than the main blob of the
    // same case, so their intensity overlaps the foreground range of other cases.
    std::vector<BlobShape> distractors;
    std::vector<double> distractor_contrast;
    const double reference = contrast.front();
    for (int d = 0; d < spec.distractors; ++d) {
        distractors.push_back(random_blob(rng, n, depth, 0.07, 0.12, 1.6));
        const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
        distractor_contrast.push_back(std::max(0.08, reference + sign * (0.12 + 0.13 * u(rng))));
    }

    const std::size_t count = static_cast<std::size_t>(depth) * n * n;
    v.voxels.assign(count, 0.0f);
    std::vector<std::uint8_t> labels(count, 0);
    for (int z = 0; z < depth; ++z) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                double value = base;
                for (const auto& w : waves) value += w.amp * std::cos(2 * M_PI * (w.fy * y + w.fx * x + w.fz * z) + w.phase);
                std::uint8_t label = 0;
                for (std::size_t b = 0; b < blobs.size(); ++b) {
                    const double sd = blobs[b].signed_distance(y, x, z);
                    value += contrast[b] * soft_inside(sd);
                    if (sd > 0.0) label = static_cast<std::uint8_t>(b + 1);
                }
                for (std::size_t d = 0; d < distractors.size(); ++d) {
                    value += distractor_contrast[d] * soft_inside(distractors[d].signed_distance(y, x, z));
                }
                value += noise(rng);
                const std::size_t idx = (static_cast<std::size_t>(z) * n + y) * n + x;
                v.voxels[idx] = static_cast<float>(value);
                labels[idx] = label;
            }
        }
    }
    v.labels = std::move(labels);
    return v;
}

std::vector<std::string> select_labeled_cases(const DatasetManifest& manifest, int count, std::uint64_t seed) {
    std::vector<std::string> pool;
    for (const auto& id : manifest.train) {
        if (manifest.find(id).has_label) pool.push_back(id);
    }
    if (count < 1 || count > static_cast<int>(pool.size())) {
        throw InvalidInput("labeled case count " + std::to_string(count) + " outside [1, " +
                           std::to_string(pool.size()) + "] (training cases with labels)");
    }
    std::mt19937_64 pick(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(pool.begin(), pool.end(), pick);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

DatasetManifest synthesize_dataset(const SynthesisSpec& spec, const fs::path& out_dir) {
    if (spec.cases < 1) throw InvalidInput("synth: --cases must be >= 1");
    if (spec.classes < 2 || spec.classes > 8) throw InvalidInput("synth: --classes must be in [2, 8]");
    if (spec.size < 16 || spec.size % 16 != 0) throw InvalidInput("synth: --size must be a positive multiple of 16");
    if (spec.slices < 1) throw InvalidInput("synth: --slices must be >= 1");
    if (spec.noise < 0.0) throw InvalidInput("synth: --noise must be >= 0");
    if (!(spec.labeled_ratio > 0.0 && spec.labeled_ratio <= 1.0)) {
        throw InvalidInput("synth: --labeled-ratio must be in (0, 1]");
    }
    const int labeled = static_cast<int>(std::lround(spec.labeled_ratio * spec.cases));
    if (labeled < 1) {
        throw InvalidInput("synth: labeled ratio " + std::to_string(spec.labeled_ratio) + " of " +
                           std::to_string(spec.cases) + " cases yields zero labeled cases");
    }
    const int val = spec.val_cases >= 0 ? spec.val_cases : std::max(2, static_cast<int>(std::lround(spec.cases / 7.0)));
    const int test = spec.test_cases >= 0 ? spec.test_cases
                                          : std::max(4, static_cast<int>(std::lround(spec.cases * 2 / 7.0)));

    DatasetManifest m;
    m.class_count = spec.classes;
    const int total = spec.cases + val + test;
    fs::create_directories(out_dir / "cases");
    for (int i = 0; i < total; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%03d", i);
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(i), 0x5eedu};
        std::mt19937_64 rng(seq);
        const auto volume = synthesize_case(spec, id, rng);
        const std::string rel = std::string("cases/") + id;
        write_case(out_dir / rel, volume);
        m.cases.push_back({id, volume.shape, volume.spacing_mm, true, rel});
        (i < spec.cases ? m.train : (i < spec.cases + val ? m.val : m.test)).push_back(id);
    }

    m.labeled_case_ids = select_labeled_cases(m, labeled, spec.seed);

    save_manifest(out_dir / kManifestFile, m);
    return m;
}

}  // namespace scp
