#include <algorithm>
#include <bit>
#include <fstream>
#include <set>

#include <json.hpp>

#include "scp/data.hpp"

namespace scp {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes a little-endian host");

std::optional<std::span<const std::uint8_t>> CaseVolume::label_slice(int s) const {
    if (!labels) return std::nullopt;
    return std::span<const std::uint8_t>(labels->data() + s * slice_size(), slice_size());
}

namespace {

template <class T>
std::vector<T> read_raw(const fs::path& file, std::size_t count) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open " + file.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T)) {
        throw FormatError(file.string() + ": expected " + std::to_string(count * sizeof(T)) + " bytes, found " +
                          std::to_string(bytes));
    }
    in.seekg(0);
    std::vector<T> out(count);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw FormatError("failed reading " + file.string());
    return out;
}

template <class T>
void write_raw(const fs::path& file, const std::vector<T>& data) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + file.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!out) throw FormatError("failed writing " + file.string());
}

json read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": invalid JSON: " + e.what());
    }
}

void write_json(const fs::path& file, const json& j) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

}  // namespace

CaseVolume ingest_case(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw FormatError(dir.string() + ": unknown case format (expected a directory with meta.json and image.raw)");
    }
    const auto meta_file = dir / "meta.json";
    if (!fs::exists(meta_file)) throw FormatError(dir.string() + ": missing meta.json");
    const json meta = read_json(meta_file);

    CaseVolume v;
    v.case_id = dir.filename().string();
    try {
        const auto shape = meta.at("shape").get<std::vector<int>>();
        const auto spacing = meta.at("spacing_mm").get<std::vector<double>>();
        if (shape.size() != 3 || spacing.size() != 3) throw FormatError("shape and spacing_mm need 3 entries");
        std::copy(shape.begin(), shape.end(), v.shape.begin());
        std::copy(spacing.begin(), spacing.end(), v.spacing_mm.begin());
        v.class_count = meta.at("class_count").get<int>();
    } catch (const json::exception& e) {
        throw FormatError(meta_file.string() + ": corrupt manifest: " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(meta_file.string() + ": corrupt manifest: " + e.what());
    }
    for (int d : v.shape) {
        if (d <= 0) throw FormatError(meta_file.string() + ": non-positive shape entry");
    }
    for (double s : v.spacing_mm) {
        if (!(s > 0.0)) throw FormatError(meta_file.string() + ": spacing must be positive");
    }
    if (v.class_count < 2 || v.class_count > 255) throw FormatError(meta_file.string() + ": class_count out of range");

    const std::size_t count = static_cast<std::size_t>(v.shape[0]) * v.shape[1] * v.shape[2];
    v.voxels = read_raw<float>(dir / "image.raw", count);
    if (fs::exists(dir / "label.raw")) {
        auto labels = read_raw<std::uint8_t>(dir / "label.raw", count);
        const auto peak = *std::max_element(labels.begin(), labels.end());
        if (peak >= v.class_count) {
            throw FormatError(dir.string() + ": label value " + std::to_string(peak) + " >= class_count " +
                              std::to_string(v.class_count));
        }
        v.labels = std::move(labels);
    }
    return v;
}

void write_case(const fs::path& dir, const CaseVolume& v) {
    const std::size_t count = static_cast<std::size_t>(v.shape[0]) * v.shape[1] * v.shape[2];
    if (v.voxels.size() != count) throw InvalidInput("write_case: voxel count does not match shape");
    if (v.labels && v.labels->size() != count) throw InvalidInput("write_case: label count does not match shape");
    fs::create_directories(dir);
    write_raw(dir / "image.raw", v.voxels);
    if (v.labels) write_raw(dir / "label.raw", *v.labels);
    write_json(dir / "meta.json", json{{"shape", v.shape}, {"spacing_mm", v.spacing_mm}, {"class_count", v.class_count}});
}

// ---------------------------------------------------------------- manifest

const DatasetManifest::Case& DatasetManifest::find(const std::string& case_id) const {
    for (const auto& c : cases) {
        if (c.case_id == case_id) return c;
    }
    throw InvalidInput("manifest: unknown case '" + case_id + "'");
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw InvalidInput("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<std::string> DatasetManifest::unlabeled_case_ids() const {
    std::vector<std::string> out;
    for (const auto& id : train) {
        if (std::find(labeled_case_ids.begin(), labeled_case_ids.end(), id) == labeled_case_ids.end()) {
            out.push_back(id);
        }
    }
    return out;
}

long DatasetManifest::labeled_slice_count() const {
    long n = 0;
    for (const auto& id : labeled_case_ids) n += find(id).shape[0];
    return n;
}

long DatasetManifest::unlabeled_slice_count() const {
    long n = 0;
    for (const auto& id : unlabeled_case_ids()) n += find(id).shape[0];
    return n;
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& c : cases) {
        if (!ids.insert(c.case_id).second) throw FormatError("manifest: duplicate case id '" + c.case_id + "'");
    }
    std::set<std::string> assigned;
    for (const auto* part : {&train, &val, &test}) {
        for (const auto& id : *part) {
            if (!ids.count(id)) throw FormatError("manifest: split references unknown case '" + id + "'");
            if (!assigned.insert(id).second) {
                throw FormatError("manifest: case '" + id + "' appears in more than one split");
            }
        }
    }
    std::set<std::string> labeled;
    for (const auto& id : labeled_case_ids) {
        if (std::find(train.begin(), train.end(), id) == train.end()) {
            throw FormatError("manifest: labeled case '" + id + "' is not a training case");
        }
        if (!labeled.insert(id).second) throw FormatError("manifest: labeled case '" + id + "' listed twice");
        if (!find(id).has_label) throw FormatError("manifest: labeled case '" + id + "' has no label volume");
    }
    if (class_count < 2) throw FormatError("manifest: class_count must be >= 2");
}

DatasetManifest load_manifest(const fs::path& file) {
    const json j = read_json(file);
    DatasetManifest m;
    try {
        m.class_count = j.at("class_count").get<int>();
        for (const auto& c : j.at("cases")) {
            DatasetManifest::Case e;
            e.case_id = c.at("case_id").get<std::string>();
            e.shape = c.at("shape").get<std::array<int, 3>>();
            e.spacing_mm = c.at("spacing_mm").get<std::array<double, 3>>();
            e.has_label = c.at("has_label").get<bool>();
            e.path = c.value("path", "cases/" + e.case_id);
            m.cases.push_back(std::move(e));
        }
        const auto& split = j.at("split");
        m.train = split.at("train").get<std::vector<std::string>>();
        m.val = split.at("val").get<std::vector<std::string>>();
        m.test = split.at("test").get<std::vector<std::string>>();
        m.labeled_case_ids = j.at("labeled_case_ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": corrupt manifest: " + e.what());
    }
    m.validate();
    return m;
}

void save_manifest(const fs::path& file, const DatasetManifest& m) {
    m.validate();
    json cases = json::array();
    for (const auto& c : m.cases) {
        cases.push_back({{"case_id", c.case_id},
                         {"shape", c.shape},
                         {"spacing_mm", c.spacing_mm},
                         {"has_label", c.has_label},
                         {"path", c.path}});
    }
    json j{{"class_count", m.class_count},
           {"cases", cases},
           {"split", {{"train", m.train}, {"val", m.val}, {"test", m.test}}},
           {"labeled_case_ids", m.labeled_case_ids},
           {"labeled_slices", m.labeled_slice_count()},
           {"unlabeled_slices", m.unlabeled_slice_count()}};
    write_json(file, j);
}

}  // namespace scp
