#pragma once

#include <span>
#include <vector>

#include "scp/losses.hpp"
#include "scp/prototype.hpp"

namespace scp {

struct ObjectiveOptions {
    LossToggles toggles;
    ConsistencyDistance distance = ConsistencyDistance::Squared;
    bool ground_truth_prototypes = false;  // labeled samples aggregate prototypes with their masks
    bool check_invariants = false;         // validate every probability map produced
};

// One batch element as seen by the objective: network logits and the (detached) feature map.
struct SampleInput {
    Tensor3<double> logits;
    FeatureMap feat;
    const Mask* label = nullptr;  // null for unlabeled samples
};

struct SampleTerms {
    bool labeled = false;
    double seg = 0.0;
    double spcc = 0.0;
    double cpcc = 0.0;
    double mean_w1 = 1.0;
    double mean_w2 = 1.0;
};

struct ObjectiveDiagnostics {
    long probability_maps_checked = 0;
    double max_normalization_error = 0.0;
};

struct ObjectiveResult {
    LossReport report;
    std::vector<SampleTerms> terms;
    std::vector<Tensor3<double>> grad_logits;  // d total / d logits, per sample
    ObjectiveDiagnostics diagnostics;
};

// Full per-batch loss: softmax → prototypes of every sample → similarity stack per target →
// self-aware and cross-sample predictions → vote entropy and the w1/w2 weights →
// SPCC, CPCC and supervised terms → warmup-weighted total, with gradients to the logits.
// Prototypical targets and weights are constants in the backward pass.
ObjectiveResult evaluate_objective(std::span<const SampleInput> batch, long t, long t_max,
                                   const ObjectiveOptions& options);

}  // namespace scp
