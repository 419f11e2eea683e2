#include "scp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scp/log.hpp"

namespace scp {
namespace {

void require_same(const ProbabilityMap& a, const ProbabilityMap& b, const char* who) {
    if (!a.values.same_shape(b.values)) {
        throw InvalidInput(std::string(who) + ": shape mismatch " + a.values.shape_string() + " vs " +
                           b.values.shape_string());
    }
}

void require_plane(const PixelWeightMap& w, const ProbabilityMap& p, const char* who) {
    if (w.values.channels() != 1 || !w.values.same_plane(p.values)) {
        throw InvalidInput(std::string(who) + ": weight map " + w.values.shape_string() + " does not match " +
                           p.values.shape_string());
    }
}

// Weighted consistency term and its gradient with respect to p_net.
LossValue consistency(const ProbabilityMap& target, const ProbabilityMap& p_net, const Tensor3<double>* weight,
                      ConsistencyDistance distance) {
    const int classes = p_net.class_count();
    const int n = p_net.values.pixels();
    const double norm = 1.0 / (static_cast<double>(classes) * n);
    LossValue out{0.0, Tensor3<double>(classes, p_net.height(), p_net.width())};

    double acc = 0.0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < n; ++i) {
            const double w = weight ? weight->at(0, i) : 1.0;
            const double diff = target.values.at(c, i) - p_net.values.at(c, i);
            if (distance == ConsistencyDistance::Squared) {
                acc += w * diff * diff;
                out.grad.at(c, i) = -2.0 * w * diff * norm;
            } else {
                acc += w * std::abs(diff);
                out.grad.at(c, i) = diff > 0.0 ? -w * norm : (diff < 0.0 ? w * norm : 0.0);
            }
        }
    }
    out.value = acc * norm;
    return out;
}

}  // namespace

LossValue spcc_loss(const ProbabilityMap& p_self, const ProbabilityMap& p_net, ConsistencyDistance distance) {
    require_same(p_self, p_net, "spcc_loss");
    return consistency(p_self, p_net, nullptr, distance);
}

LossValue cpcc_loss(const ProbabilityMap& p_cross, const ProbabilityMap& p_net, const PixelWeightMap& w1,
                    const PixelWeightMap& w2, ConsistencyDistance distance) {
    require_same(p_cross, p_net, "cpcc_loss");
    require_plane(w1, p_net, "cpcc_loss");
    require_plane(w2, p_net, "cpcc_loss");
    Tensor3<double> weight(1, p_net.height(), p_net.width());
    for (int i = 0; i < weight.pixels(); ++i) weight.at(0, i) = w1.values.at(0, i) * w2.values.at(0, i);
    return consistency(p_cross, p_net, &weight, distance);
}

SupervisedLossValue supervised_loss(const ProbabilityMap& p_net, const Mask& label) {
    if (!label.same_shape(p_net.values)) {
        throw InvalidInput("supervised_loss: label " + label.shape_string() + " vs prediction " +
                           p_net.values.shape_string());
    }
    check_one_hot(label);
    const int classes = p_net.class_count();
    const int n = p_net.values.pixels();
    SupervisedLossValue out;
    out.grad = Tensor3<double>(classes, p_net.height(), p_net.width());

    double ce = 0.0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < n; ++i) {
            if (label.at(c, i) == 0) continue;
            const double p = p_net.values.at(c, i);
            const double clamped = std::clamp(p, kCrossEntropyClamp, 1.0);
            ce -= std::log(clamped);
            if (p > kCrossEntropyClamp && p <= 1.0) out.grad.at(c, i) = -1.0 / (p * n);
        }
    }
    out.cross_entropy = ce / n;

    double dice_sum = 0.0;
    for (int c = 0; c < classes; ++c) {
        double inter = 0.0, pred = 0.0, truth = 0.0;
        for (int i = 0; i < n; ++i) {
            const double p = p_net.values.at(c, i);
            const double y = label.at(c, i);
            inter += p * y;
            pred += p;
            truth += y;
        }
        const double num = 2.0 * inter + kDiceSmooth;
        const double den = pred + truth + kDiceSmooth;
        dice_sum += num / den;
        // d(-num/den)/dp_i / C
        for (int i = 0; i < n; ++i) {
            const double y = label.at(c, i);
            out.grad.at(c, i) -= (2.0 * y * den - num) / (den * den) / classes;
        }
    }
    out.dice = 1.0 - dice_sum / classes;
    out.value = out.cross_entropy + out.dice;
    return out;
}

Tensor3<double> softmax_backward(const ProbabilityMap& prob, const Tensor3<double>& grad_prob) {
    if (!grad_prob.same_shape(prob.values)) throw InvalidInput("softmax_backward: shape mismatch");
    const int classes = prob.class_count();
    Tensor3<double> out(classes, prob.height(), prob.width());
    for (int i = 0; i < prob.values.pixels(); ++i) {
        double dot = 0.0;
        for (int c = 0; c < classes; ++c) dot += prob.values.at(c, i) * grad_prob.at(c, i);
        for (int c = 0; c < classes; ++c) out.at(c, i) = prob.values.at(c, i) * (grad_prob.at(c, i) - dot);
    }
    return out;
}

double warmup_lambda(long t, long t_max) {
    if (t_max <= 0) throw InvalidInput("warmup_lambda: t_max must be positive");
    if (t < 0) throw InvalidInput("warmup_lambda: t must be non-negative");
    if (t > t_max) {
        log::warn("warmup_lambda: t=" + std::to_string(t) + " exceeds t_max=" + std::to_string(t_max) +
                  ", clamping to the final weight");
        t = t_max;
    }
    const double phase = 1.0 - static_cast<double>(t) / static_cast<double>(t_max);
    return kMaxConsistencyWeight * std::exp(-5.0 * phase * phase);
}

LossReport total_loss(std::span<const double> seg_terms, std::span<const double> spcc_terms,
                      std::span<const double> cpcc_terms, long t, long t_max, const LossToggles& toggles) {
    if (!toggles.any_consistency() && seg_terms.empty()) {
        throw InvalidInput("total_loss: consistency terms disabled and no labeled samples in the batch");
    }
    auto mean = [](std::span<const double> v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    LossReport r;
    r.iteration = t;
    r.lambda_t = warmup_lambda(t, t_max);
    r.seg = mean(seg_terms);
    r.spcc = toggles.spcc ? mean(spcc_terms) : 0.0;
    r.cpcc = toggles.cpcc ? mean(cpcc_terms) : 0.0;
    r.total = r.seg + r.lambda_t * (r.spcc + r.cpcc);
    return r;
}

}  // namespace scp
