#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "scp/data.hpp"
#include "support.hpp"

using namespace scp;
using namespace testing;
namespace fs = std::filesystem;

namespace {

CaseVolume block_case(const std::string& id, int s, int h, int w, bool labeled, int classes = 3) {
    CaseVolume v;
    v.case_id = id;
    v.shape = {s, h, w};
    v.spacing_mm = {5.0, 1.25, 1.5};
    v.class_count = classes;
    v.voxels.resize(static_cast<std::size_t>(s) * h * w);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i % 97) * 0.5f;
    if (labeled) {
        std::vector<std::uint8_t> lab(v.voxels.size());
        for (int z = 0; z < s; ++z)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    lab[(static_cast<std::size_t>(z) * h + y) * w + x] = static_cast<std::uint8_t>((y * 2 / h + x * 2 / w) % classes);
        v.labels = std::move(lab);
    }
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

// Minimal single-file NIfTI-1 writer: x fastest, float32 or uint8 voxels.
void write_nifti(const fs::path& file, int nx, int ny, int nz, const float pixdim[3], const std::vector<float>* f32,
                 const std::vector<std::uint8_t>* u8, float slope = 0.0f, float inter = 0.0f) {
    std::vector<char> bytes(352, 0);
    auto put = [&](std::size_t off, auto value) { std::memcpy(bytes.data() + off, &value, sizeof value); };
    put(0, std::int32_t{348});
    const std::int16_t dims[4] = {3, static_cast<std::int16_t>(nx), static_cast<std::int16_t>(ny),
                                  static_cast<std::int16_t>(nz)};
    for (int i = 0; i < 4; ++i) put(40 + 2 * i, dims[i]);
    put(70, std::int16_t(f32 ? 16 : 2));
    put(72, std::int16_t(f32 ? 32 : 8));
    put(76, 1.0f);
    for (int i = 0; i < 3; ++i) put(80 + 4 * i, pixdim[i]);
    put(108, 352.0f);
    put(112, slope);
    put(116, inter);
    std::memcpy(bytes.data() + 344, "n+1", 4);
    if (f32) {
        const auto* p = reinterpret_cast<const char*>(f32->data());
        bytes.insert(bytes.end(), p, p + f32->size() * sizeof(float));
    } else {
        bytes.insert(bytes.end(), u8->begin(), u8->end());
    }
    if (file.extension() == ".gz") {
        gzFile gz = gzopen(file.c_str(), "wb");
        gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(gz);
    } else {
        std::ofstream(file, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
}

}  // namespace

TEST_CASE("canonical case directory round-trip") {
    TempDir dir("case");
    const auto v = block_case("c0", 10, 300, 300, true);
    write_case(dir.path / "c0", v);
    const auto back = ingest_case(dir.path / "c0");
    CHECK(back.slices() == 10);
    CHECK(back.shape == v.shape);
    CHECK(back.spacing_mm == v.spacing_mm);
    CHECK(back.class_count == 3);
    CHECK(back.voxels == v.voxels);
    REQUIRE(back.has_label());
    CHECK(*back.labels == *v.labels);
}

TEST_CASE("case without a label file has no label") {
    TempDir dir("nolabel");
    write_case(dir.path / "u", block_case("u", 2, 8, 8, false));
    const auto back = ingest_case(dir.path / "u");
    CHECK_FALSE(back.has_label());
    CHECK_FALSE(back.label_slice(0).has_value());
}

TEST_CASE("ingest rejects bad cases with distinct diagnostics") {
    TempDir dir("bad");
    auto v = block_case("b", 2, 4, 4, true, 2);
    (*v.labels)[5] = 4;
    write_case(dir.path / "b", v);
    try {
        ingest_case(dir.path / "b");
        FAIL("expected a rejection");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("label value 4") != std::string::npos);
    }

    write_case(dir.path / "t", block_case("t", 2, 4, 4, false));
    fs::resize_file(dir.path / "t" / "image.raw", 12);
    try {
        ingest_case(dir.path / "t");
        FAIL("expected a rejection");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("bytes") != std::string::npos);
    }

    write_case(dir.path / "m", block_case("m", 2, 4, 4, false));
    std::ofstream(dir.path / "m" / "meta.json") << "{ not json";
    try {
        ingest_case(dir.path / "m");
        FAIL("expected a rejection");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("invalid JSON") != std::string::npos);
    }

    fs::create_directories(dir.path / "empty");
    try {
        ingest_case(dir.path / "empty");
        FAIL("expected a rejection");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("missing meta.json") != std::string::npos);
    }
}

TEST_CASE("manifest validation enforces case-level splits") {
    DatasetManifest m;
    m.cases = {{"a", {1, 4, 4}, {1, 1, 1}, true, "a"}, {"b", {1, 4, 4}, {1, 1, 1}, false, "b"}};
    m.train = {"a"};
    m.val = {"b"};
    m.labeled_case_ids = {"a"};
    CHECK_NOTHROW(m.validate());
    m.test = {"a"};
    CHECK_THROWS_AS(m.validate(), FormatError);
    m.test.clear();
    m.labeled_case_ids = {"b"};
    CHECK_THROWS_AS(m.validate(), FormatError);
    m.train = {"a", "b"};
    m.val.clear();
    CHECK_THROWS_AS(m.validate(), FormatError);  // b has no label volume
    m.labeled_case_ids = {"a"};
    CHECK_NOTHROW(m.validate());
    CHECK(m.unlabeled_case_ids() == std::vector<std::string>{"b"});
    CHECK(m.labeled_slice_count() == 1);
    CHECK(m.unlabeled_slice_count() == 1);
}

TEST_CASE("preprocessing a constant slice yields zeros and a flag") {
    std::vector<float> s(30 * 20, 7.0f);
    const auto out = preprocess_slice(s, 30, 20, std::nullopt, 2, 32);
    CHECK(out.constant);
    for (float v : out.image.flat()) CHECK(v == 0.0f);
}

TEST_CASE("preprocessing spans [0, 1] for non-constant slices") {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<float> u(-300.0f, 900.0f);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> s(37 * 23);
        for (auto& v : s) v = u(rng);
        const auto out = preprocess_slice(s, 37, 23, std::nullopt, 2, 64);
        CHECK_FALSE(out.constant);
        const auto [lo, hi] = std::minmax_element(out.image.flat().begin(), out.image.flat().end());
        CHECK(*lo == doctest::Approx(0.0f).epsilon(1e-6));
        CHECK(*hi == doctest::Approx(1.0f).epsilon(1e-5));
        CHECK(out.image.height() == 64);
    }
}

TEST_CASE("nearest label resize keeps every class of a block label") {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> dim(20, 90), cls(0, 3);
        const int h = dim(rng), w = dim(rng), target = 32;
        // 4×4 grid of blocks; each block spans at least 8 px at the target scale.
        std::vector<std::uint8_t> lab(static_cast<std::size_t>(h) * w);
        int grid[4][4];
        std::set<int> present;
        for (auto& row : grid)
            for (auto& g : row) present.insert(g = cls(rng));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) lab[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(grid[y * 4 / h][x * 4 / w]);
        std::vector<float> img(lab.size());
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i);
        const auto out = preprocess_slice(img, h, w, std::span<const std::uint8_t>(lab), 4, target);
        REQUIRE(out.label.has_value());
        std::set<int> after;
        for (auto v : out.label->flat()) after.insert(v);
        CHECK(after == present);
    }
}

TEST_CASE("preprocessing rejects labels out of range and non-finite voxels") {
    std::vector<float> s(16, 1.0f);
    s[3] = 2.0f;
    std::vector<std::uint8_t> lab(16, 0);
    lab[2] = 5;
    CHECK_THROWS_AS(preprocess_slice(s, 4, 4, std::span<const std::uint8_t>(lab), 3, 8), InvalidInput);
    s[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(preprocess_slice(s, 4, 4, std::nullopt, 3, 8), InvalidInput);
}

TEST_CASE("augmentation is seeded and transforms labels with the image") {
    std::mt19937_64 a(53), b(53);
    for (int i = 0; i < 50; ++i) {
        const auto da = draw_augmentation(a, {});
        const auto db = draw_augmentation(b, {});
        CHECK(da.flip_horizontal == db.flip_horizontal);
        CHECK(da.flip_vertical == db.flip_vertical);
        CHECK(da.quarter_turns == db.quarter_turns);
    }

    std::mt19937_64 rng(54);
    for (int trial = 0; trial < 40; ++trial) {
        Tensor3<float> img(1, 8, 8);
        Tensor3<std::uint8_t> lab(1, 8, 8);
        for (int i = 0; i < 64; ++i) {
            img.flat()[i] = static_cast<float>(i);
            lab.flat()[i] = static_cast<std::uint8_t>(i);
        }
        augment(img, &lab, rng);
        // Labels encode the original pixel index, so image and label must still agree everywhere.
        std::set<int> seen;
        for (int i = 0; i < 64; ++i) {
            CHECK(img.flat()[i] == static_cast<float>(lab.flat()[i]));
            seen.insert(lab.flat()[i]);
        }
        CHECK(seen.size() == 64);
    }
}

TEST_CASE("double flip is the identity") {
    std::mt19937_64 rng(55);
    const auto img0 = tensor_cast<float>(random_tensor(rng, 1, 6, 6));
    for (bool h : {false, true})
        for (bool v : {false, true}) {
            auto img = img0;
            const AugmentDraw d{h, v, 0, 0.0};
            apply_augmentation(d, img, nullptr);
            apply_augmentation(d, img, nullptr);
            CHECK(img == img0);
        }
    auto img = img0;
    for (int k = 0; k < 4; ++k) apply_augmentation({false, false, 1, 0.0}, img, nullptr);
    CHECK(img == img0);
}

TEST_CASE("augmentation draw frequencies") {
    std::mt19937_64 rng(56);
    int h = 0, v = 0, turns[4] = {0, 0, 0, 0};
    const int n = 8000;
    for (int i = 0; i < n; ++i) {
        const auto d = draw_augmentation(rng, {});
        h += d.flip_horizontal;
        v += d.flip_vertical;
        ++turns[d.quarter_turns];
    }
    CHECK(std::abs(h / double(n) - 0.5) < 0.03);
    CHECK(std::abs(v / double(n) - 0.5) < 0.03);
    for (int t : turns) CHECK(std::abs(t / double(n) - 0.25) < 0.03);
}

TEST_CASE("free rotation keeps labels within the class set") {
    std::mt19937_64 rng(57);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor3<float> img(1, 16, 16, 0.5f);
        Tensor3<std::uint8_t> lab(1, 16, 16);
        for (int i = 0; i < 256; ++i) lab.flat()[i] = static_cast<std::uint8_t>((i / 16 > 8) ? 2 : (i % 16 > 8));
        augment(img, &lab, rng, {true, true});
        for (auto v : lab.flat()) CHECK(v <= 2);
        for (float v : img.flat()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("synthetic dataset arithmetic and determinism") {
    TempDir a("synth_a"), b("synth_b");
    SynthesisSpec spec;
    spec.cases = 20;
    spec.size = 32;
    spec.slices = 3;
    spec.seed = 11;
    const auto m = synthesize_dataset(spec, a.path);
    CHECK(m.train.size() == 20);
    CHECK(m.labeled_case_ids.size() == 2);
    CHECK(m.val.size() == 3);
    CHECK(m.test.size() == 6);
    CHECK_NOTHROW(m.validate());
    synthesize_dataset(spec, b.path);
    CHECK(tree(a.path) == tree(b.path));

    spec.seed = 12;
    TempDir c("synth_c");
    synthesize_dataset(spec, c.path);
    CHECK(tree(a.path) != tree(c.path));

    spec.labeled_ratio = 0.0;
    CHECK_THROWS_AS(synthesize_dataset(spec, c.path / "x"), InvalidInput);
    spec.labeled_ratio = 0.01;
    CHECK_THROWS_AS(synthesize_dataset(spec, c.path / "y"), InvalidInput);
}

TEST_CASE("synthetic labels are valid one-hot after preprocessing") {
    TempDir dir("synth_pre");
    SynthesisSpec spec;
    spec.cases = 4;
    spec.size = 32;
    spec.slices = 2;
    spec.classes = 3;
    spec.labeled_ratio = 0.5;
    synthesize_dataset(spec, dir.path);
    const auto data = SliceDataset::load(dir.path / kManifestFile, 32);
    CHECK(data.class_count() == 3);
    for (const auto& s : data.labeled_pool()) {
        CHECK_NOTHROW(check_one_hot(s.label));
        for (float v : s.image.flat()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    CHECK(data.labeled_pool().size() == 4);
    CHECK(data.unlabeled_pool().size() == 4);
}

TEST_CASE("batch composition is exact and seeded") {
    TempDir dir("batch");
    SynthesisSpec spec;
    spec.cases = 10;
    spec.size = 16;
    spec.slices = 2;
    spec.labeled_ratio = 0.2;
    synthesize_dataset(spec, dir.path);
    const auto data = SliceDataset::load(dir.path / kManifestFile, 16);
    std::set<std::string> labeled(data.manifest().labeled_case_ids.begin(), data.manifest().labeled_case_ids.end());

    const BatchComposition defaults;
    CHECK(defaults.labeled + defaults.unlabeled == 24);
    CHECK(defaults.labeled == 12);
    for (auto comp : {BatchComposition{4, 4}, defaults, BatchComposition{3, 0}}) {
        std::mt19937_64 rng(58), twin(58);
        for (int draw = 0; draw < 1000; ++draw) {
            const auto batch = compose_batch(data, comp, rng);
            REQUIRE(static_cast<int>(batch.labeled.size()) == comp.labeled);
            REQUIRE(static_cast<int>(batch.unlabeled.size()) == comp.unlabeled);
            for (const auto& s : batch.labeled) CHECK(labeled.count(s.case_id) == 1);
            for (const auto& s : batch.unlabeled) CHECK(labeled.count(s.case_id) == 0);
            if (draw < 5) {
                const auto again = compose_batch(data, comp, twin);
                for (std::size_t i = 0; i < batch.labeled.size(); ++i) {
                    CHECK(batch.labeled[i].image == again.labeled[i].image);
                    CHECK(batch.labeled[i].label == again.labeled[i].label);
                }
            } else {
                compose_batch(data, comp, twin);
            }
        }
    }
}

TEST_CASE("labeled case selection is by case and seeded") {
    DatasetManifest m;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "c" + std::to_string(i);
        m.cases.push_back({id, {2, 4, 4}, {1, 1, 1}, i != 3, id});
        m.train.push_back(id);
    }
    const auto a = select_labeled_cases(m, 4, 1);
    CHECK(a == select_labeled_cases(m, 4, 1));
    CHECK(a.size() == 4);
    CHECK(std::find(a.begin(), a.end(), "c3") == a.end());
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK_THROWS_AS(select_labeled_cases(m, 0, 1), InvalidInput);
    CHECK_THROWS_AS(select_labeled_cases(m, 12, 1), InvalidInput);
}

TEST_CASE("NIfTI volumes convert into the canonical format") {
    TempDir dir("nifti");
    const int nx = 5, ny = 4, nz = 3;
    std::vector<float> img(nx * ny * nz);
    std::vector<std::uint8_t> lab(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = static_cast<float>(i);
        lab[i] = static_cast<std::uint8_t>(i % 2);
    }
    const float pix[3] = {0.8f, 0.9f, 6.0f};
    write_nifti(dir.path / "img.nii.gz", nx, ny, nz, pix, &img, nullptr, 2.0f, 1.0f);
    write_nifti(dir.path / "lab.nii", nx, ny, nz, pix, nullptr, &lab);

    const auto v = read_nifti_case(dir.path / "img.nii.gz", dir.path / "lab.nii", 2, "n0");
    CHECK(v.shape == std::array<int, 3>{nz, ny, nx});
    CHECK(v.spacing_mm[0] == doctest::Approx(6.0));
    CHECK(v.spacing_mm[1] == doctest::Approx(0.9));
    CHECK(v.spacing_mm[2] == doctest::Approx(0.8));
    CHECK(v.voxels[7] == doctest::Approx(15.0f));  // 7·2 + 1
    REQUIRE(v.has_label());
    CHECK(*v.labels == lab);

    const auto m = add_case_to_dataset(dir.path / "ds", v, "train", true);
    CHECK(m.labeled_case_ids == std::vector<std::string>{"n0"});
    const auto back = ingest_case(dir.path / "ds" / m.find("n0").path);
    CHECK(back.voxels == v.voxels);
    CHECK_THROWS_AS(add_case_to_dataset(dir.path / "ds", v, "train", true), InvalidInput);

    std::ofstream(dir.path / "junk.nii") << "not a volume";
    CHECK_THROWS_AS(read_nifti_case(dir.path / "junk.nii", std::nullopt, 2, "j"), FormatError);
    CHECK_THROWS_AS(read_nifti_case(dir.path / "img.nii.gz", dir.path / "lab.nii", 1, "n1"), InvalidInput);
}
