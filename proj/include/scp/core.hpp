#pragma once

#include <cstdint>
#include <string>

#include "scp/tensor.hpp"

namespace scp {

using Mask = Tensor3<std::uint8_t>;

// Per-pixel class distribution, C×H×W. Class 0 is background.
struct ProbabilityMap {
    Tensor3<double> values;

    int class_count() const { return values.channels(); }
    int height() const { return values.height(); }
    int width() const { return values.width(); }

    // Largest deviation of a per-pixel class sum from 1.
    double normalization_error() const;
    // Throws InvalidInput when an entry leaves [0,1] or a pixel sum deviates by more than tol.
    void check(double tol = 1e-5) const;
};

// Per-pixel embedding, D×H×W.
struct FeatureMap {
    Tensor3<double> values;

    int embed_dim() const { return values.channels(); }
    int height() const { return values.height(); }
    int width() const { return values.width(); }
};

struct LabeledSample {
    Tensor3<float> image;  // 1×H×W in [0,1]
    Mask label;            // one-hot C×H×W
    std::string case_id;
    int slice_index = 0;
};

struct UnlabeledSample {
    Tensor3<float> image;
    std::string case_id;
    int slice_index = 0;
};

struct BatchConfig {
    int batch_size = 24;
    int labeled_per_batch = 12;
    int unlabeled_per_batch = 12;
    int class_count = 2;
    int embed_dim = 16;

    void validate() const;
};

// Softmax over the class axis with per-pixel max subtraction.
ProbabilityMap class_softmax(const Tensor3<double>& scores);

// One-hot of the per-pixel argmax; ties go to the lowest class index.
Mask argmax_one_hot(const Tensor3<double>& values);

// Per-pixel argmax class index as a 1×H×W tensor; same tie rule.
Tensor3<std::uint8_t> argmax_labels(const Tensor3<double>& values);

// Validates a one-hot mask: entries in {0,1}, exactly one 1 per pixel.
void check_one_hot(const Mask& mask);

Mask one_hot_from_labels(const Tensor3<std::uint8_t>& labels, int class_count);

}  // namespace scp
