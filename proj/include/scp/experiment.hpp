#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scp/trainer.hpp"

namespace scp {

// Everything a run needs: training config, dataset, output location.
struct ExperimentConfig {
    TrainConfig train;
    std::filesystem::path manifest;
    std::filesystem::path output_dir = "runs/run";
    int image_size = 64;
    int labeled_scans = 0;  // 0 keeps the manifest's labeled subset; otherwise a seeded draw of this many cases
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Flat "key = value" text; '#' starts a comment. Errors name the source and line.
ConfigEntries parse_config_text(const std::string& text, const std::string& source);
ConfigEntries read_config_file(const std::filesystem::path& file);

// Applies entries in order; unknown keys and bad values fail with the key named.
void apply_config(ExperimentConfig& config, const ConfigEntries& entries, const std::string& source);

// Every key with its resolved value, one per line, in a stable order.
std::string format_config(const ExperimentConfig& config);
std::vector<std::string> config_keys();

// Validates and loads the dataset, applying labeled_scans when set.
SliceDataset load_experiment_data(const ExperimentConfig& config);

inline constexpr const char* kRunConfigFile = "config.cfg";
inline constexpr const char* kResultsFile = "results.json";

struct RunOutcome {
    std::filesystem::path run_dir;
    FitResult fit;
    EvaluationSummary val;   // selected (best-on-validation) model
    EvaluationSummary test;  // selected model; empty when the test split is empty
    bool has_test = false;
};

// Writes the resolved config, trains, then evaluates the selected checkpoint and writes results.json.
RunOutcome run_experiment(const ExperimentConfig& config, const SliceDataset& data, bool resume = false);

// Loads a run directory's resolved config and the model stored in one of its checkpoints.
ExperimentConfig load_run_config(const std::filesystem::path& run_dir);
nn::UNet<float> load_model(const std::filesystem::path& checkpoint);

// The six loss configurations of the ablation, in table order.
struct AblationRow {
    std::string name;
    LossToggles toggles;
};
const std::array<AblationRow, 6>& ablation_rows();

struct AblationOutcome {
    std::vector<std::optional<RunOutcome>> runs;  // nullopt for failed rows
    std::vector<std::string> errors;              // empty string for successful rows
    std::string table;
};

// Runs all six rows under base.output_dir/rowN_*, never stopping at a failed row, and writes
// ablation.txt and ablation.json next to them.
AblationOutcome run_ablation(const ExperimentConfig& base, const SliceDataset& data);

std::string format_ablation_table(const AblationOutcome& outcome, const std::vector<std::string>& class_names,
                                  bool test_split);

std::vector<std::string> default_class_names(int class_count);

// Report artifacts for one or more finished runs; returns the printed summary.
struct ReportOptions {
    std::filesystem::path out_dir;
    std::string split = "test";
    std::string checkpoint = "best";  // best | last
};
std::string write_report(const std::vector<std::filesystem::path>& run_dirs, const ReportOptions& options);

// λ(t) and poly_lr(t) sampled at every integer t in [0, t_max].
void write_schedules(const std::filesystem::path& tsv, const std::filesystem::path& svg, const TrainConfig& config);

}  // namespace scp
