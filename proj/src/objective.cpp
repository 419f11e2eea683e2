#include "scp/objective.hpp"

#include <cmath>
#include <numeric>

namespace scp {
namespace {

void track(const ProbabilityMap& p, const ObjectiveOptions& options, ObjectiveDiagnostics& diag) {
    if (!options.check_invariants) return;
    p.check(1e-5);
    ++diag.probability_maps_checked;
    diag.max_normalization_error = std::max(diag.max_normalization_error, p.normalization_error());
}

double mean_of(const Tensor3<double>& t) {
    return std::accumulate(t.flat().begin(), t.flat().end(), 0.0) / static_cast<double>(t.size());
}

void require_finite(double v, const char* component, int sample) {
    if (!std::isfinite(v)) {
        throw NumericalError(std::string("non-finite ") + component + " loss for batch sample " +
                             std::to_string(sample));
    }
}

}  // namespace

ObjectiveResult evaluate_objective(std::span<const SampleInput> batch, long t, long t_max,
                                   const ObjectiveOptions& options) {
    const int b = static_cast<int>(batch.size());
    const auto& toggles = options.toggles;
    if (b == 0) throw InvalidInput("evaluate_objective: empty batch");
    if (toggles.any_consistency() && b < 2) {
        throw InvalidInput("evaluate_objective: consistency terms need at least 2 samples per batch");
    }

    ObjectiveResult out;
    out.terms.resize(b);
    std::vector<ProbabilityMap> probs(b);
    for (int k = 0; k < b; ++k) {
        for (double v : batch[k].logits.flat()) {
            if (!std::isfinite(v)) {
                throw NumericalError("non-finite network output for batch sample " + std::to_string(k));
            }
        }
        for (double v : batch[k].feat.values.flat()) {
            if (!std::isfinite(v)) {
                throw NumericalError("non-finite feature map for batch sample " + std::to_string(k));
            }
        }
        probs[k] = class_softmax(batch[k].logits);
        track(probs[k], options, out.diagnostics);
        if (!batch[k].feat.values.same_plane(batch[k].logits)) {
            throw InvalidInput("evaluate_objective: feature map and logits differ in spatial size");
        }
    }

    std::vector<Tensor3<double>> grad_p(b);
    std::vector<double> seg_terms, spcc_terms, cpcc_terms;
    int labeled = 0;
    for (const auto& s : batch) labeled += s.label != nullptr;

    // Supervised terms: labeled samples only.
    for (int k = 0; k < b; ++k) {
        grad_p[k] = Tensor3<double>(probs[k].class_count(), probs[k].height(), probs[k].width());
        if (!batch[k].label) continue;
        auto sup = supervised_loss(probs[k], *batch[k].label);
        require_finite(sup.value, "supervised", k);
        out.terms[k].labeled = true;
        out.terms[k].seg = sup.value;
        seg_terms.push_back(sup.value);
        const double scale = 1.0 / labeled;
        auto g = grad_p[k].flat();
        auto s = sup.grad.flat();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * s[i];
    }

    const double lambda = warmup_lambda(t, t_max);
    if (toggles.any_consistency()) {
        std::vector<PrototypeSet> prototypes(b);
        for (int k = 0; k < b; ++k) {
            prototypes[k] = options.ground_truth_prototypes && batch[k].label
                                ? compute_prototypes_from_mask(*batch[k].label, batch[k].feat, k)
                                : compute_prototypes(probs[k], batch[k].feat, k);
        }
        spcc_terms.assign(b, 0.0);
        cpcc_terms.assign(b, 0.0);
        const double scale = lambda / b;

        for (int k = 0; k < b; ++k) {
            const auto stack = build_similarity_stack(batch[k].feat, prototypes, k);
            const auto p_self = self_aware_prediction(stack.self_map());
            track(p_self, options, out.diagnostics);
            auto g = grad_p[k].flat();

            if (toggles.spcc) {
                auto l = spcc_loss(p_self, probs[k], options.distance);
                require_finite(l.value, "SPCC", k);
                spcc_terms[k] = out.terms[k].spcc = l.value;
                auto lg = l.grad.flat();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * lg[i];
            }
            if (toggles.cpcc) {
                const auto p_cross = cross_sample_prediction(stack);
                track(p_cross, options, out.diagnostics);
                const int h = p_self.height(), w = p_self.width();
                PixelWeightMap w1 = constant_weight(PixelWeightMap::Kind::Stability, h, w);
                if (toggles.w1) {
                    const auto votes = vote_probability(stack);
                    track(votes, options, out.diagnostics);
                    w1 = stability_weight(normalized_entropy(votes));
                }
                const PixelWeightMap w2 =
                    toggles.w2 ? confidence_weight(p_self) : constant_weight(PixelWeightMap::Kind::Confidence, h, w);
                out.terms[k].mean_w1 = mean_of(w1.values);
                out.terms[k].mean_w2 = mean_of(w2.values);

                auto l = cpcc_loss(p_cross, probs[k], w1, w2, options.distance);
                require_finite(l.value, "CPCC", k);
                cpcc_terms[k] = out.terms[k].cpcc = l.value;
                auto lg = l.grad.flat();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * lg[i];
            }
        }
    }

    out.report = total_loss(seg_terms, spcc_terms, cpcc_terms, t, t_max, toggles);
    if (!std::isfinite(out.report.total)) throw NumericalError("non-finite total loss");

    out.grad_logits.reserve(b);
    for (int k = 0; k < b; ++k) out.grad_logits.push_back(softmax_backward(probs[k], grad_p[k]));
    return out;
}

}  // namespace scp
