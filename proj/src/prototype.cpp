#include "scp/prototype.hpp"

#include <algorithm>
#include <cmath>

namespace scp {
namespace {

template <class Weight>
PrototypeSet aggregate(const Tensor3<Weight>& weights, const FeatureMap& feat, int source_sample, const char* who) {
    if (!weights.same_plane(feat.values)) {
        throw InvalidInput(std::string(who) + ": weight map " + weights.shape_string() + " and feature map " +
                           feat.values.shape_string() + " differ in spatial size");
    }
    const int classes = weights.channels();
    const int dim = feat.embed_dim();
    const int n = feat.values.pixels();

    PrototypeSet out;
    out.class_count = classes;
    out.embed_dim = dim;
    out.source_sample = source_sample;
    out.vectors.assign(static_cast<std::size_t>(classes) * dim, 0.0);
    std::vector<double> mass(classes, 0.0);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < classes; ++c) {
        const auto w = weights.channel(c);
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += static_cast<double>(w[i]);
        mass[c] = m;
        double* q = out.vectors.data() + static_cast<std::size_t>(c) * dim;
        for (int d = 0; d < dim; ++d) {
            const auto f = feat.values.channel(d);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += static_cast<double>(w[i]) * f[i];
            q[d] = acc / (m + kPrototypeEps);
        }
    }
    for (int c = 0; c < classes; ++c) {
        if (mass[c] < kDegenerateMass) out.degenerate_classes.push_back(c);
    }
    return out;
}

}  // namespace

bool PrototypeSet::is_degenerate(int c) const {
    return std::find(degenerate_classes.begin(), degenerate_classes.end(), c) != degenerate_classes.end();
}

PrototypeSet compute_prototypes(const ProbabilityMap& prob, const FeatureMap& feat, int source_sample) {
    return aggregate(prob.values, feat, source_sample, "compute_prototypes");
}

PrototypeSet compute_prototypes_from_mask(const Mask& mask, const FeatureMap& feat, int source_sample) {
    return aggregate(mask, feat, source_sample, "compute_prototypes_from_mask");
}

Tensor3<double> cosine_similarity_map(const FeatureMap& feat, const PrototypeSet& protos) {
    const int dim = feat.embed_dim();
    if (dim != protos.embed_dim) {
        throw InvalidInput("cosine_similarity_map: feature dim " + std::to_string(dim) + " != prototype dim " +
                           std::to_string(protos.embed_dim));
    }
    const int classes = protos.class_count;
    const int n = feat.values.pixels();
    Tensor3<double> out(classes, feat.height(), feat.width());

    std::vector<double> proto_norm(classes);
    for (int c = 0; c < classes; ++c) {
        double s = 0.0;
        for (double v : protos.vector(c)) s += v * v;
        proto_norm[c] = std::sqrt(s);
    }

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double fnorm = 0.0;
        for (int d = 0; d < dim; ++d) {
            const double f = feat.values.at(d, i);
            fnorm += f * f;
        }
        fnorm = std::sqrt(fnorm);
        for (int c = 0; c < classes; ++c) {
            const double* q = protos.vectors.data() + static_cast<std::size_t>(c) * dim;
            double dot = 0.0;
            for (int d = 0; d < dim; ++d) dot += feat.values.at(d, i) * q[d];
            out.at(c, i) = std::clamp(dot / (fnorm * proto_norm[c] + kPrototypeEps), -1.0, 1.0);
        }
    }
    return out;
}

ProbabilityMap self_aware_prediction(const Tensor3<double>& sim_self) { return class_softmax(sim_self); }

ProbabilityMap cross_sample_prediction(const SimilarityStack& stack) {
    const int batch = stack.batch_size();
    if (batch < 2) throw InvalidInput("cross_sample_prediction: need at least 2 samples in the stack, got " +
                                      std::to_string(batch));
    const int k = stack.target_sample;
    if (k < 0 || k >= batch) throw InvalidInput("cross_sample_prediction: target index out of range");
    const auto& ref = stack.maps.front();
    for (const auto& m : stack.maps) {
        if (!m.same_shape(ref)) throw InvalidInput("cross_sample_prediction: maps differ in shape");
    }
    const int classes = ref.channels();
    const int n = ref.pixels();
    ProbabilityMap out{Tensor3<double>(classes, ref.height(), ref.width())};

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double total = 0.0;
        for (int c = 0; c < classes; ++c) {
            double acc = 0.0;
            for (int j = 0; j < batch; ++j) {
                if (j == k) continue;
                acc += std::exp(stack.maps[j].at(c, i));
            }
            out.values.at(c, i) = acc;
            total += acc;
        }
        for (int c = 0; c < classes; ++c) out.values.at(c, i) /= total;
    }
    return out;
}

std::vector<PrototypeSet> compute_batch_prototypes(std::span<const ProbabilityMap> probs,
                                                   std::span<const FeatureMap> feats) {
    if (probs.size() != feats.size()) throw InvalidInput("compute_batch_prototypes: batch size mismatch");
    std::vector<PrototypeSet> out(probs.size());
    for (std::size_t n = 0; n < probs.size(); ++n) out[n] = compute_prototypes(probs[n], feats[n], static_cast<int>(n));
    return out;
}

SimilarityStack build_similarity_stack(const FeatureMap& target_feat, std::span<const PrototypeSet> prototypes,
                                       int target_sample) {
    SimilarityStack stack;
    stack.target_sample = target_sample;
    stack.maps.reserve(prototypes.size());
    for (const auto& protos : prototypes) stack.maps.push_back(cosine_similarity_map(target_feat, protos));
    return stack;
}

}  // namespace scp
