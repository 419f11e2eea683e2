#pragma once

#include <span>
#include <vector>

#include "scp/core.hpp"

namespace scp {

inline constexpr double kPrototypeEps = 1e-8;
inline constexpr double kDegenerateMass = 1e-6;

// Class prototypes of one sample: C vectors of length D, stored row-major.
struct PrototypeSet {
    int class_count = 0;
    int embed_dim = 0;
    int source_sample = 0;
    std::vector<double> vectors;
    std::vector<int> degenerate_classes;  // classes whose probability mass was below kDegenerateMass

    std::span<const double> vector(int c) const {
        return {vectors.data() + static_cast<std::size_t>(c) * embed_dim, static_cast<std::size_t>(embed_dim)};
    }
    bool is_degenerate(int c) const;
};

// Similarity maps of one target sample against the prototypes of every batch sample.
// maps[n] is C×H×W; maps[target_sample] is the self-aware map.
struct SimilarityStack {
    std::vector<Tensor3<double>> maps;
    int target_sample = 0;

    int batch_size() const { return static_cast<int>(maps.size()); }
    const Tensor3<double>& self_map() const { return maps.at(target_sample); }
};

// Probability-weighted mean feature per class: sum_i p(i) f(i) / (sum_i p(i) + eps).
PrototypeSet compute_prototypes(const ProbabilityMap& prob, const FeatureMap& feat, int source_sample = 0);

// Same aggregation with a one-hot ground-truth mask as the weights.
PrototypeSet compute_prototypes_from_mask(const Mask& mask, const FeatureMap& feat, int source_sample = 0);

// <f(i), q^c> / (|f(i)| |q^c| + eps), clamped to [-1, 1].
Tensor3<double> cosine_similarity_map(const FeatureMap& feat, const PrototypeSet& protos);

// Softmax of the self-similarity map.
ProbabilityMap self_aware_prediction(const Tensor3<double>& sim_self);

// Integrates exp(similarity) over every map except the target's own, normalized over classes.
ProbabilityMap cross_sample_prediction(const SimilarityStack& stack);

// Batch-level helpers. prototypes[n] comes from sample n.
std::vector<PrototypeSet> compute_batch_prototypes(std::span<const ProbabilityMap> probs,
                                                   std::span<const FeatureMap> feats);

SimilarityStack build_similarity_stack(const FeatureMap& target_feat, std::span<const PrototypeSet> prototypes,
                                       int target_sample);

}  // namespace scp
