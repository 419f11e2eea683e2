#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scp/data.hpp"

namespace scp {
namespace fs = std::filesystem;

namespace {

std::vector<char> read_maybe_gzipped(const fs::path& file) {
    gzFile gz = gzopen(file.c_str(), "rb");
    if (!gz) throw InvalidInput("cannot open " + file.string());
    std::vector<char> out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    const bool failed = n < 0;
    gzclose(gz);
    if (failed) throw FormatError(file.string() + ": decompression failed");
    return out;
}

template <class T>
T read_field(const std::vector<char>& bytes, std::size_t offset, bool swap) {
    T v;
    char tmp[sizeof(T)];
    std::memcpy(tmp, bytes.data() + offset, sizeof(T));
    if (swap) std::reverse(tmp, tmp + sizeof(T));
    std::memcpy(&v, tmp, sizeof(T));
    return v;
}

struct NiftiVolume {
    std::array<int, 3> shape{};  // S, H, W (z, y, x)
    std::array<double, 3> spacing{};
    std::vector<double> values;
};

NiftiVolume read_nifti(const fs::path& file) {
    const auto bytes = read_maybe_gzipped(file);
    if (bytes.size() < 352) throw FormatError(file.string() + ": too short for a NIfTI-1 header");
    bool swap = false;
    if (read_field<std::int32_t>(bytes, 0, false) != 348) {
        if (read_field<std::int32_t>(bytes, 0, true) != 348) throw FormatError(file.string() + ": not a NIfTI-1 file");
        swap = true;
    }
    if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0) {
        throw FormatError(file.string() + ": only single-file NIfTI-1 (.nii/.nii.gz) is supported");
    }
    const int ndim = read_field<std::int16_t>(bytes, 40, swap);
    if (ndim < 2 || ndim > 4) throw FormatError(file.string() + ": unsupported dimensionality " + std::to_string(ndim));
    int dims[4] = {1, 1, 1, 1};
    for (int i = 0; i < ndim; ++i) dims[i] = read_field<std::int16_t>(bytes, 42 + 2 * i, swap);
    if (ndim == 4 && dims[3] != 1) throw FormatError(file.string() + ": 4D volumes with more than one frame");
    const int nx = dims[0], ny = dims[1], nz = ndim >= 3 ? dims[2] : 1;
    if (nx < 1 || ny < 1 || nz < 1) throw FormatError(file.string() + ": non-positive dimension");

    const int datatype = read_field<std::int16_t>(bytes, 70, swap);
    float pix[4];
    for (int i = 0; i < 4; ++i) pix[i] = read_field<float>(bytes, 76 + 4 * i, swap);
    const auto vox_offset = static_cast<std::size_t>(read_field<float>(bytes, 108, swap));
    double slope = read_field<float>(bytes, 112, swap);
    const double inter = read_field<float>(bytes, 116, swap);
    if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;

    std::size_t elem = 0;
    switch (datatype) {
        case 2: case 256: elem = 1; break;   // uint8, int8
        case 4: case 512: elem = 2; break;   // int16, uint16
        case 8: case 16: case 768: elem = 4; break;  // int32, float32, uint32
        case 64: elem = 8; break;            // float64
        default: throw FormatError(file.string() + ": unsupported datatype " + std::to_string(datatype));
    }
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    if (bytes.size() < vox_offset + n * elem) throw FormatError(file.string() + ": truncated voxel data");

    NiftiVolume v;
    v.shape = {nz, ny, nx};
    v.spacing = {ndim >= 3 ? std::abs(pix[3]) : 1.0, std::abs(pix[2]), std::abs(pix[1])};
    for (auto& s : v.spacing) {
        if (!(s > 0) || !std::isfinite(s)) s = 1.0;
    }
    v.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = vox_offset + i * elem;
        double raw = 0;
        switch (datatype) {
            case 2: raw = static_cast<std::uint8_t>(bytes[off]); break;
            case 256: raw = static_cast<std::int8_t>(bytes[off]); break;
            case 4: raw = read_field<std::int16_t>(bytes, off, swap); break;
            case 512: raw = read_field<std::uint16_t>(bytes, off, swap); break;
            case 8: raw = read_field<std::int32_t>(bytes, off, swap); break;
            case 768: raw = read_field<std::uint32_t>(bytes, off, swap); break;
            case 16: raw = read_field<float>(bytes, off, swap); break;
            case 64: raw = read_field<double>(bytes, off, swap); break;
        }
        v.values[i] = raw * slope + inter;
    }
    return v;
}

}  // namespace

CaseVolume read_nifti_case(const fs::path& image, const std::optional<fs::path>& label, int class_count,
                           const std::string& case_id) {
    if (class_count < 2) throw InvalidInput("convert: class count must be >= 2");
    const auto img = read_nifti(image);
    CaseVolume out;
    out.case_id = case_id;
    out.shape = img.shape;
    out.spacing_mm = img.spacing;
    out.class_count = class_count;
    out.voxels.assign(img.values.begin(), img.values.end());
    if (label) {
        const auto lab = read_nifti(*label);
        if (lab.shape != img.shape) throw InvalidInput("convert: label shape differs from image shape");
        std::vector<std::uint8_t> labels(lab.values.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double v = std::round(lab.values[i]);
            if (v < 0 || v >= class_count) {
                throw InvalidInput("convert: label value " + std::to_string(v) + " outside [0, " +
                                   std::to_string(class_count - 1) + "]");
            }
            labels[i] = static_cast<std::uint8_t>(v);
        }
        out.labels = std::move(labels);
    }
    return out;
}

DatasetManifest add_case_to_dataset(const fs::path& dataset_dir, const CaseVolume& volume, const std::string& split,
                                    bool labeled) {
    if (split != "train" && split != "val" && split != "test") {
        throw InvalidInput("convert: split must be train, val or test");
    }
    if (labeled && (split != "train" || !volume.has_label())) {
        throw InvalidInput("convert: only training cases with labels can be marked labeled");
    }
    const auto manifest_file = dataset_dir / kManifestFile;
    DatasetManifest m;
    if (fs::exists(manifest_file)) {
        m = load_manifest(manifest_file);
        if (m.class_count != volume.class_count) throw InvalidInput("convert: class count differs from the manifest");
    } else {
        m.class_count = volume.class_count;
    }
    for (const auto& c : m.cases) {
        if (c.case_id == volume.case_id) throw InvalidInput("convert: case '" + volume.case_id + "' already exists");
    }
    const std::string rel = "cases/" + volume.case_id;
    write_case(dataset_dir / rel, volume);
    m.cases.push_back({volume.case_id, volume.shape, volume.spacing_mm, volume.has_label(), rel});
    (split == "train" ? m.train : split == "val" ? m.val : m.test).push_back(volume.case_id);
    if (labeled) m.labeled_case_ids.push_back(volume.case_id);
    m.validate();
    save_manifest(manifest_file, m);
    return m;
}

}  // namespace scp
