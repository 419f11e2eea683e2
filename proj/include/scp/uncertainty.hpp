#pragma once

#include "scp/core.hpp"
#include "scp/prototype.hpp"

namespace scp {

// A per-pixel scalar map H×W (stored as a 1-channel tensor).
struct PixelWeightMap {
    enum class Kind { Entropy, Stability, Confidence };

    Kind kind = Kind::Entropy;
    Tensor3<double> values;

    int height() const { return values.height(); }
    int width() const { return values.width(); }
};

// Fraction of the B argmax masks in the stack (self map included) that vote for each class.
ProbabilityMap vote_probability(const SimilarityStack& stack);

// -(1/log C) sum_c p log p, with 0 log 0 = 0.
PixelWeightMap normalized_entropy(const ProbabilityMap& p_norm);

// w1 = 1 - e.
PixelWeightMap stability_weight(const PixelWeightMap& entropy);

// w2 = max_c p_self^c.
PixelWeightMap confidence_weight(const ProbabilityMap& p_self);

// Constant map used when a weight is switched off.
PixelWeightMap constant_weight(PixelWeightMap::Kind kind, int height, int width, double value = 1.0);

}  // namespace scp
