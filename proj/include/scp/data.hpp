#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scp/core.hpp"

namespace scp {

// ---------------------------------------------------------------- on-disk cases

// One scan: S×H0×W0 voxels with per-axis spacing (slice, row, column) in mm.
struct CaseVolume {
    std::string case_id;
    std::array<int, 3> shape{};  // S, H0, W0
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    int class_count = 2;
    std::vector<float> voxels;
    std::optional<std::vector<std::uint8_t>> labels;

    int slices() const { return shape[0]; }
    std::size_t slice_size() const { return static_cast<std::size_t>(shape[1]) * shape[2]; }
    bool has_label() const { return labels.has_value(); }
    std::span<const float> slice(int s) const { return {voxels.data() + s * slice_size(), slice_size()}; }
    std::optional<std::span<const std::uint8_t>> label_slice(int s) const;
};

// Reads the canonical case directory: image.raw (LE float32), optional label.raw (uint8), meta.json.
CaseVolume ingest_case(const std::filesystem::path& dir);
void write_case(const std::filesystem::path& dir, const CaseVolume& volume);

// Reads a single-file NIfTI-1 volume (.nii or .nii.gz) and optional label volume into a case.
// Axis order (x, y, z) maps to (column, row, slice); scaling slope/intercept are applied.
CaseVolume read_nifti_case(const std::filesystem::path& image, const std::optional<std::filesystem::path>& label,
                           int class_count, const std::string& case_id);

// ---------------------------------------------------------------- manifest

struct DatasetManifest {
    struct Case {
        std::string case_id;
        std::array<int, 3> shape{};
        std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
        bool has_label = false;
        std::string path;  // relative to the manifest directory
    };

    int class_count = 2;
    std::vector<Case> cases;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::vector<std::string> labeled_case_ids;

    // Slice counts of the labeled and unlabeled training cases.
    long labeled_slice_count() const;
    long unlabeled_slice_count() const;
    std::vector<std::string> unlabeled_case_ids() const;
    const Case& find(const std::string& case_id) const;
    const std::vector<std::string>& split(const std::string& name) const;

    // Case-level split integrity, labeled ⊆ train, labeled cases carry labels.
    void validate() const;
};

// Seeded draw of `count` labeled training cases (by case, not slice), returned sorted.
std::vector<std::string> select_labeled_cases(const DatasetManifest& manifest, int count, std::uint64_t seed);

// Writes the case under dataset_dir/cases/<id> and registers it in dataset_dir/manifest.json,
// creating the manifest when absent.
DatasetManifest add_case_to_dataset(const std::filesystem::path& dataset_dir, const CaseVolume& volume,
                                    const std::string& split, bool labeled);

DatasetManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);

// ---------------------------------------------------------------- preprocessing

struct PreprocessedSlice {
    Tensor3<float> image;                        // 1×S×S in [0,1]
    std::optional<Tensor3<std::uint8_t>> label;  // 1×S×S class indices
    bool constant = false;                       // input had max == min; image is all zero
};

// Bilinear resize of the image, nearest-neighbour resize of the label, then per-slice min-max.
PreprocessedSlice preprocess_slice(std::span<const float> slice, int height, int width,
                                   std::optional<std::span<const std::uint8_t>> label, int class_count,
                                   int target_size = 256);

Tensor3<float> resize_bilinear(std::span<const float> src, int height, int width, int out_h, int out_w);
Tensor3<std::uint8_t> resize_nearest(std::span<const std::uint8_t> src, int height, int width, int out_h, int out_w);

// ---------------------------------------------------------------- augmentation

struct AugmentOptions {
    bool enabled = true;
    bool free_rotation = false;  // arbitrary angle (bilinear image, nearest label) instead of k·90°
};

struct AugmentDraw {
    bool flip_horizontal = false;
    bool flip_vertical = false;
    int quarter_turns = 0;
    double angle_deg = 0.0;
};

AugmentDraw draw_augmentation(std::mt19937_64& rng, const AugmentOptions& options);
// Applies a transform to a square image and (optionally) its label map or one-hot mask.
void apply_augmentation(const AugmentDraw& draw, Tensor3<float>& image, Tensor3<std::uint8_t>* label);
void augment(Tensor3<float>& image, Tensor3<std::uint8_t>* label, std::mt19937_64& rng,
             const AugmentOptions& options = {});

// ---------------------------------------------------------------- slices and batches

struct PreparedCase {
    std::string case_id;
    std::array<double, 3> spacing_mm{};  // after in-plane resize
    bool spacing_from_header = true;
    std::vector<Tensor3<float>> images;
    std::vector<Tensor3<std::uint8_t>> labels;  // empty when the case is unlabeled

    int slices() const { return static_cast<int>(images.size()); }
    bool has_label() const { return !labels.empty(); }
};

// All cases of a manifest, preprocessed to target_size×target_size and held in memory.
class SliceDataset {
public:
    static SliceDataset load(const std::filesystem::path& manifest_file, int target_size);
    // Case paths in the manifest are resolved against root.
    static SliceDataset load(DatasetManifest manifest, const std::filesystem::path& root, int target_size);
    static SliceDataset from_cases(DatasetManifest manifest, const std::vector<CaseVolume>& volumes, int target_size);

    const DatasetManifest& manifest() const { return manifest_; }
    int class_count() const { return manifest_.class_count; }
    int image_size() const { return target_size_; }
    const PreparedCase& prepared(const std::string& case_id) const;
    std::vector<const PreparedCase*> split_cases(const std::string& split) const;

    const std::vector<LabeledSample>& labeled_pool() const { return labeled_; }
    const std::vector<UnlabeledSample>& unlabeled_pool() const { return unlabeled_; }

private:
    DatasetManifest manifest_;
    int target_size_ = 0;
    std::vector<PreparedCase> cases_;
    std::vector<LabeledSample> labeled_;
    std::vector<UnlabeledSample> unlabeled_;
};

struct BatchComposition {
    int labeled = 12;
    int unlabeled = 12;
};

struct Batch {
    std::vector<LabeledSample> labeled;
    std::vector<UnlabeledSample> unlabeled;

    int size() const { return static_cast<int>(labeled.size() + unlabeled.size()); }
};

// Draws labeled and unlabeled slices uniformly with replacement, then augments each.
Batch compose_batch(const SliceDataset& data, const BatchComposition& composition, std::mt19937_64& rng,
                    const AugmentOptions& augmentation = {});

// ---------------------------------------------------------------- synthetic data

struct SynthesisSpec {
    int cases = 20;  // training cases; validation and test cases are added in a 140:20:40 proportion
    int val_cases = -1;
    int test_cases = -1;
    int classes = 2;
    int size = 64;
    int slices = 8;
    double noise = 0.1;
    int distractors = 1;
    double labeled_ratio = 0.1;
    std::uint64_t seed = 0;
};

// Writes smooth random blob volumes with exact labels plus manifest.json into out_dir.
DatasetManifest synthesize_dataset(const SynthesisSpec& spec, const std::filesystem::path& out_dir);

// Generates one case in memory (used by synthesize_dataset).
CaseVolume synthesize_case(const SynthesisSpec& spec, const std::string& case_id, std::mt19937_64& rng);

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace scp
