#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "scp/data.hpp"
#include "scp/metrics.hpp"
#include "scp/nn/sgd.hpp"
#include "scp/nn/unet.hpp"
#include "scp/objective.hpp"

namespace scp {

struct TrainConfig {
    long t_max = 1000;
    double base_lr = 0.1;
    double poly_power = 0.9;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    BatchComposition batch;  // 12+12; desk-scale runs use 4+4
    std::uint64_t seed = 0;
    LossToggles toggles;
    ConsistencyDistance distance = ConsistencyDistance::Squared;
    bool ground_truth_prototypes = false;
    nn::FeatureTap tap = nn::FeatureTap::Final;
    int base_width = 16;
    long eval_every = 100;       // 0 disables periodic validation
    long checkpoint_every = 0;   // extra "last" checkpoints between evaluations; 0 = only at evaluations and end
    AugmentOptions augment;
    bool check_invariants = false;

    // Batch actually drawn: without consistency terms, unlabeled slices carry no signal and are not drawn.
    BatchComposition effective_batch() const;
    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// base_lr·(1 − t/t_max)^power for 0 ≤ t ≤ t_max.
double poly_lr(long t, long t_max, double base_lr, double power);

struct StepDiagnostics {
    ObjectiveDiagnostics objective;
    double grad_norm = 0.0;
    double lr = 0.0;
    std::vector<SampleTerms> terms;
};

// One optimizer update on a composed batch: forward → objective → backward → SGD step at poly_lr(t).
LossReport train_step(const Batch& batch, nn::UNet<float>& model, nn::Sgd<float>& optimizer, long t,
                      const TrainConfig& config, StepDiagnostics* diagnostics = nullptr);

struct HistoryEntry {
    long iteration = 0;
    double val_dsc = 0.0;
    std::optional<double> val_assd;
};

struct FitResult {
    std::filesystem::path last_checkpoint;
    std::filesystem::path best_checkpoint;  // empty when no validation ran
    std::vector<HistoryEntry> history;
    double best_dsc = -1.0;
    long best_iteration = -1;
    long iterations_run = 0;  // in this invocation
};

inline constexpr const char* kTrainLogFile = "train_log.tsv";
inline constexpr const char* kHistoryFile = "history.tsv";
inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kBestCheckpoint = "best.ckpt";
inline constexpr const char* kPostMortemCheckpoint = "postmortem.ckpt";

class Trainer {
public:
    Trainer(TrainConfig config, const SliceDataset& data);

    const TrainConfig& config() const { return config_; }
    long iteration() const { return t_; }
    nn::UNet<float>& model() { return model_; }
    nn::Sgd<float>& optimizer() { return optimizer_; }
    const std::vector<HistoryEntry>& history() const { return history_; }

    // Draws the next batch and applies one update.
    LossReport step(StepDiagnostics* diagnostics = nullptr);

    // Trains until t_max (or until `stop_at` iterations, to simulate an interruption), writing the
    // log, history and checkpoints into run_dir. With resume, continues from run_dir/last.ckpt.
    FitResult fit(const std::filesystem::path& run_dir, bool resume = false, std::optional<long> stop_at = {});

    void save(const std::filesystem::path& path);
    void restore(const std::filesystem::path& path);

private:
    nlohmann::json state_json() const;
    void append_log(const LossReport& report, double lr);

    std::filesystem::path run_dir_;
    TrainConfig config_;
    const SliceDataset* data_;
    nn::UNet<float> model_;
    nn::Sgd<float> optimizer_;
    std::mt19937_64 rng_;
    long t_ = 0;
    std::vector<HistoryEntry> history_;
    double best_dsc_ = -1.0;
    long best_iteration_ = -1;
};

struct TrainLogRecord {
    LossReport report;
    double lr = 0.0;
};

// Reads a training log written by fit.
std::vector<TrainLogRecord> read_train_log(const std::filesystem::path& file);
std::vector<HistoryEntry> read_history(const std::filesystem::path& file);

}  // namespace scp
