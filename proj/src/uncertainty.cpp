#include "scp/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace scp {

ProbabilityMap vote_probability(const SimilarityStack& stack) {
    const int batch = stack.batch_size();
    if (batch < 2) throw InvalidInput("vote_probability: need at least 2 maps, got " + std::to_string(batch));
    const auto& ref = stack.maps.front();
    for (const auto& m : stack.maps) {
        if (!m.same_shape(ref)) throw InvalidInput("vote_probability: maps differ in shape");
    }
    const int classes = ref.channels();
    const int n = ref.pixels();
    Tensor3<int> votes(classes, ref.height(), ref.width(), 0);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (const auto& m : stack.maps) {
            int best = 0;
            for (int c = 1; c < classes; ++c) {
                if (m.at(c, i) > m.at(best, i)) best = c;
            }
            ++votes.at(best, i);
        }
    }

    ProbabilityMap out{Tensor3<double>(classes, ref.height(), ref.width())};
    const double denom = static_cast<double>(batch);
    auto src = votes.flat();
    auto dst = out.values.flat();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]) / denom;
    return out;
}

PixelWeightMap normalized_entropy(const ProbabilityMap& p_norm) {
    const int classes = p_norm.class_count();
    if (classes < 2) throw InvalidInput("normalized_entropy: class count must be >= 2");
    const double scale = 1.0 / std::log(static_cast<double>(classes));
    PixelWeightMap out{PixelWeightMap::Kind::Entropy, Tensor3<double>(1, p_norm.height(), p_norm.width())};
    const int n = p_norm.values.pixels();

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double h = 0.0;
        for (int c = 0; c < classes; ++c) {
            const double p = p_norm.values.at(c, i);
            if (p > 0.0) h -= p * std::log(p);
        }
        out.values.at(0, i) = std::clamp(h * scale, 0.0, 1.0);
    }
    return out;
}

PixelWeightMap stability_weight(const PixelWeightMap& entropy) {
    PixelWeightMap out{PixelWeightMap::Kind::Stability, Tensor3<double>(1, entropy.height(), entropy.width())};
    auto src = entropy.values.flat();
    auto dst = out.values.flat();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = 1.0 - src[i];
    return out;
}

PixelWeightMap confidence_weight(const ProbabilityMap& p_self) {
    PixelWeightMap out{PixelWeightMap::Kind::Confidence, Tensor3<double>(1, p_self.height(), p_self.width())};
    for (int i = 0; i < p_self.values.pixels(); ++i) {
        double best = p_self.values.at(0, i);
        for (int c = 1; c < p_self.class_count(); ++c) best = std::max(best, p_self.values.at(c, i));
        out.values.at(0, i) = best;
    }
    return out;
}

PixelWeightMap constant_weight(PixelWeightMap::Kind kind, int height, int width, double value) {
    return {kind, Tensor3<double>(1, height, width, value)};
}

}  // namespace scp
