#include "scp/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scp {

double ProbabilityMap::normalization_error() const {
    double worst = 0.0;
    const int n = values.pixels();
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int c = 0; c < class_count(); ++c) sum += values.at(c, i);
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
}

void ProbabilityMap::check(double tol) const {
    if (class_count() < 2) throw InvalidInput("ProbabilityMap: class count must be >= 2, got " + values.shape_string());
    for (double v : values.flat()) {
        if (!(v >= -tol && v <= 1.0 + tol)) {
            throw InvalidInput("ProbabilityMap: entry " + std::to_string(v) + " outside [0,1]");
        }
    }
    const double err = normalization_error();
    if (err > tol) {
        throw InvalidInput("ProbabilityMap: per-pixel sum deviates from 1 by " + std::to_string(err));
    }
}

void BatchConfig::validate() const {
    if (labeled_per_batch < 0 || unlabeled_per_batch < 0) throw InvalidInput("BatchConfig: negative sample count");
    if (labeled_per_batch + unlabeled_per_batch != batch_size) {
        throw InvalidInput("BatchConfig: labeled_per_batch + unlabeled_per_batch must equal batch_size");
    }
    if (batch_size < 2) throw InvalidInput("BatchConfig: batch_size must be >= 2 for cross-sample terms");
    if (class_count < 2) throw InvalidInput("BatchConfig: class_count must be >= 2");
    if (embed_dim < 1) throw InvalidInput("BatchConfig: embed_dim must be >= 1");
}

ProbabilityMap class_softmax(const Tensor3<double>& scores) {
    const int classes = scores.channels();
    const int n = scores.pixels();
    ProbabilityMap out{Tensor3<double>(classes, scores.height(), scores.width())};

    for (int i = 0; i < n; ++i) {
        double peak = -INFINITY;
        for (int c = 0; c < classes; ++c) {
            const double s = scores.at(c, i);
            if (!std::isfinite(s)) {
                std::ostringstream msg;
                msg << "class_softmax: non-finite score " << s << " at class " << c << ", pixel (" << i / scores.width()
                    << ", " << i % scores.width() << ")";
                throw InvalidInput(msg.str());
            }
            peak = std::max(peak, s);
        }
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
            const double e = std::exp(scores.at(c, i) - peak);
            out.values.at(c, i) = e;
            sum += e;
        }
        for (int c = 0; c < classes; ++c) out.values.at(c, i) /= sum;
    }
    return out;
}

Tensor3<std::uint8_t> argmax_labels(const Tensor3<double>& values) {
    const int classes = values.channels();
    Tensor3<std::uint8_t> out(1, values.height(), values.width());
    for (int i = 0; i < values.pixels(); ++i) {
        int best = 0;
        double best_value = values.at(0, i);
        if (!std::isfinite(best_value)) throw InvalidInput("argmax: non-finite input");
        for (int c = 1; c < classes; ++c) {
            const double v = values.at(c, i);
            if (!std::isfinite(v)) throw InvalidInput("argmax: non-finite input");
            if (v > best_value) {
                best = c;
                best_value = v;
            }
        }
        out.at(0, i) = static_cast<std::uint8_t>(best);
    }
    return out;
}

Mask argmax_one_hot(const Tensor3<double>& values) {
    return one_hot_from_labels(argmax_labels(values), values.channels());
}

Mask one_hot_from_labels(const Tensor3<std::uint8_t>& labels, int class_count) {
    Mask out(class_count, labels.height(), labels.width(), 0);
    for (int i = 0; i < labels.pixels(); ++i) {
        const int c = labels.at(0, i);
        if (c >= class_count) {
            throw InvalidInput("one_hot: label value " + std::to_string(c) + " >= class count " +
                               std::to_string(class_count));
        }
        out.at(c, i) = 1;
    }
    return out;
}

void check_one_hot(const Mask& mask) {
    for (int i = 0; i < mask.pixels(); ++i) {
        int ones = 0;
        for (int c = 0; c < mask.channels(); ++c) {
            const auto v = mask.at(c, i);
            if (v > 1) throw InvalidInput("label is not one-hot: entry " + std::to_string(v));
            ones += v;
        }
        if (ones != 1) {
            throw InvalidInput("label is not one-hot: pixel " + std::to_string(i) + " has " + std::to_string(ones) +
                               " active classes");
        }
    }
}

}  // namespace scp
