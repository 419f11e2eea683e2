#pragma once

#include <span>

#include "scp/core.hpp"
#include "scp/uncertainty.hpp"

namespace scp {

// Per-entry distance used by the consistency losses.
enum class ConsistencyDistance { Squared, Absolute };

// A scalar loss together with its gradient with respect to the network probabilities.
// Targets and weights are constants: no gradient is produced for them.
struct LossValue {
    double value = 0.0;
    Tensor3<double> grad;
};

struct SupervisedLossValue {
    double cross_entropy = 0.0;
    double dice = 0.0;
    double value = 0.0;
    Tensor3<double> grad;
};

inline constexpr double kCrossEntropyClamp = 1e-7;
inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kMaxConsistencyWeight = 0.1;

// mean over C·H·W of d(p_self - p_net).
LossValue spcc_loss(const ProbabilityMap& p_self, const ProbabilityMap& p_net,
                    ConsistencyDistance distance = ConsistencyDistance::Squared);

// mean over C·H·W of w1·w2·d(p_cross - p_net).
LossValue cpcc_loss(const ProbabilityMap& p_cross, const ProbabilityMap& p_net, const PixelWeightMap& w1,
                    const PixelWeightMap& w2, ConsistencyDistance distance = ConsistencyDistance::Squared);

// Cross-entropy plus soft Dice averaged over all classes (background included).
SupervisedLossValue supervised_loss(const ProbabilityMap& p_net, const Mask& label);

// Pulls a gradient with respect to softmax probabilities back to the logits.
Tensor3<double> softmax_backward(const ProbabilityMap& prob, const Tensor3<double>& grad_prob);

// 0.1·exp(-5(1 - t/t_max)^2). t > t_max is clamped with a warning.
double warmup_lambda(long t, long t_max);

struct LossToggles {
    bool spcc = true;
    bool cpcc = true;
    bool w1 = true;
    bool w2 = true;

    bool any_consistency() const { return spcc || cpcc; }
    bool operator==(const LossToggles&) const = default;
};

struct LossReport {
    long iteration = 0;
    double seg = 0.0;
    double spcc = 0.0;
    double cpcc = 0.0;
    double lambda_t = 0.0;
    double total = 0.0;
};

// Batch-mean composition: total = mean(seg over labeled) + lambda(t)·(mean spcc + mean cpcc over all samples).
// Disabled terms contribute zero; spcc/cpcc spans may be empty when their toggle is off.
LossReport total_loss(std::span<const double> seg_terms, std::span<const double> spcc_terms,
                      std::span<const double> cpcc_terms, long t, long t_max, const LossToggles& toggles);

}  // namespace scp
