#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scp/data.hpp"
#include "scp/nn/unet.hpp"

namespace scp {

// Binary mask over a D×H×W grid.
struct BinaryVolume {
    std::array<int, 3> shape{};
    std::vector<std::uint8_t> voxels;

    BinaryVolume() = default;
    explicit BinaryVolume(std::array<int, 3> s) : shape(s), voxels(static_cast<std::size_t>(s[0]) * s[1] * s[2], 0) {}

    std::size_t index(int z, int y, int x) const { return (static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x; }
    std::uint8_t& at(int z, int y, int x) { return voxels[index(z, y, x)]; }
    std::uint8_t at(int z, int y, int x) const { return voxels[index(z, y, x)]; }
    std::size_t count() const;
};

using Spacing = std::array<double, 3>;

// 100·2|A∩B|/(|A|+|B|); two empty masks score 100.
double dice_score(const BinaryVolume& pred, const BinaryVolume& gt);

// Foreground voxels with at least one 6-neighbour that is background or outside the grid.
std::vector<std::array<int, 3>> surface_voxels(const BinaryVolume& mask);

// Squared Euclidean distance (mm²) from every voxel to the nearest set voxel of `sites`,
// exact separable transform with anisotropic spacing. All entries are huge when `sites` is empty.
std::vector<double> squared_distance_transform(const BinaryVolume& sites, const Spacing& spacing);

// Average symmetric surface distance in mm: the mean of the two directed average surface
// distances. Undefined (nullopt) when either surface is empty.
std::optional<double> assd(const BinaryVolume& pred, const BinaryVolume& gt, const Spacing& spacing);

struct ClassMetric {
    int cls = 0;
    double dsc = 0.0;
    std::optional<double> assd;
};

struct CaseResult {
    std::string case_id;
    std::vector<ClassMetric> per_class;
    Spacing spacing{};
    bool spacing_from_header = true;
};

struct EvaluationSummary {
    std::vector<int> classes;  // reported classes (background excluded)
    std::vector<CaseResult> cases;
    std::vector<double> class_dsc;                 // case-averaged, per class
    std::vector<std::optional<double>> class_assd; // over cases where defined
    double mean_dsc = 0.0;                         // Avg column: mean of class_dsc
    std::optional<double> mean_assd;               // mean of defined class_assd
    int undefined_assd = 0;
};

// Label volumes (class indices) of one case.
struct LabelVolume {
    std::string case_id;
    std::array<int, 3> shape{};
    std::vector<std::uint8_t> labels;
    Spacing spacing{1.0, 1.0, 1.0};
    bool spacing_from_header = true;
};

BinaryVolume class_mask(const LabelVolume& volume, int cls);

CaseResult evaluate_case(const LabelVolume& pred, const LabelVolume& gt, int class_count);
EvaluationSummary summarize(std::vector<CaseResult> cases, int class_count);

// Stacks the slice-wise argmax predictions of every case of a split into volumes and scores them.
std::vector<LabelVolume> predict_split(nn::UNet<float>& model, const SliceDataset& data, const std::string& split);
LabelVolume ground_truth_volume(const PreparedCase& pc);
EvaluationSummary evaluate_split(nn::UNet<float>& model, const SliceDataset& data, const std::string& split);

// Table with per-class DSC/ASSD columns and an Avg column; one row per entry.
struct TableRow {
    std::string label;
    const EvaluationSummary* summary;
};
std::string format_metrics_table(const std::vector<TableRow>& rows, const std::vector<std::string>& class_names);

nlohmann::json summary_to_json(const EvaluationSummary& summary);

}  // namespace scp
