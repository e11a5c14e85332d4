#include "crossmodal/losses.hpp"

#include <algorithm>
#include <cmath>

#include "crossmodal/errors.hpp"

namespace crossmodal {

namespace {

void check_distribution(const Vec& c, const char* which) {
    double sum = 0.0;
    for (const double v : c) {
        if (v < 0.0) throw DimensionError(std::string(which) + " target has a negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DimensionError(std::string(which) + " target does not sum to 1");
    }
}

// -sum over the support of c of c_k log(p_k) plus the logit gradient p - c.
double cross_entropy_term(const Vec& p, const Vec& c, Vec& d_logits) {
    double value = 0.0;
    d_logits.resize(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (c[k] > 0.0) value -= c[k] * std::log(p[k]);
        d_logits[k] = p[k] - c[k];
    }
    return value;
}

}  // namespace

CosineLossResult cosine_embedding_loss(const PairLossInput& input) {
    const Vec& a = input.phi_audio;
    const Vec& v = input.phi_visual;
    if (a.size() != v.size()) {
        throw DimensionError("cosine_embedding_loss: embedding lengths differ");
    }
    if (input.y != 1 && input.y != -1) {
        throw DimensionError("cosine_embedding_loss: y must be +1 or -1");
    }

    CosineLossResult result;
    result.d_phi_audio = Vec(a.size(), 0.0);
    result.d_phi_visual = Vec(v.size(), 0.0);

    const double na = norm(a);
    const double nv = norm(v);
    if (na == 0.0 || nv == 0.0) {
        result.degenerate = true;
        // cosine defined as 0; the loss is still well defined, gradients are 0
        result.value = (input.y == 1) ? 1.0 : std::max(0.0, 0.0 - input.margin_alpha);
        return result;
    }

    const double raw = dot(a, v) / (na * nv);
    const double cos = std::clamp(raw, -1.0, 1.0);

    double dloss_dcos = 0.0;
    if (input.y == 1) {
        result.value = 1.0 - cos;
        dloss_dcos = -1.0;
    } else {
        if (cos > input.margin_alpha) {
            result.value = cos - input.margin_alpha;
            dloss_dcos = 1.0;
        } else {
            result.value = 0.0;
            dloss_dcos = 0.0;  // hinge inactive, subgradient 0 at cos == alpha
        }
    }

    if (dloss_dcos != 0.0) {
        // d cos / d a_k = v_k / (|a||v|) - cos * a_k / |a|^2, symmetric in v.
        const double inv = 1.0 / (na * nv);
        const double inv_a2 = 1.0 / (na * na);
        const double inv_v2 = 1.0 / (nv * nv);
        for (std::size_t k = 0; k < a.size(); ++k) {
            result.d_phi_audio[k] = dloss_dcos * (v[k] * inv - raw * a[k] * inv_a2);
            result.d_phi_visual[k] = dloss_dcos * (a[k] * inv - raw * v[k] * inv_v2);
        }
    }
    return result;
}

Vec label_distribution(std::span<const std::int32_t> labels, std::size_t num_classes) {
    if (labels.empty()) throw DimensionError("label_distribution: empty label set");
    Vec c(num_classes, 0.0);
    const double w = 1.0 / static_cast<double>(labels.size());
    for (const std::int32_t label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
            throw DimensionError("label_distribution: label " + std::to_string(label) +
                                 " outside [0, " + std::to_string(num_classes) + ")");
        }
        c[static_cast<std::size_t>(label)] += w;
    }
    return c;
}

ClassificationLossResult classification_loss(const Vec& p_visual, const Vec& p_audio,
                                             const ClassTargets& targets) {
    if (p_visual.size() != targets.visual.size() || p_audio.size() != targets.audio.size() ||
        p_visual.size() != p_audio.size()) {
        throw DimensionError("classification_loss: probability/target lengths differ");
    }
    check_distribution(targets.visual, "visual");
    check_distribution(targets.audio, "audio");

    ClassificationLossResult result;
    result.value = cross_entropy_term(p_visual, targets.visual, result.d_logits_visual) +
                   cross_entropy_term(p_audio, targets.audio, result.d_logits_audio);
    return result;
}

ClassificationLossResult classification_loss_from_logits(const Vec& logits_visual,
                                                          const Vec& logits_audio,
                                                          const ClassTargets& targets) {
    if (logits_visual.size() != targets.visual.size() ||
        logits_audio.size() != targets.audio.size()) {
        throw DimensionError("classification_loss: logit/target lengths differ");
    }
    check_distribution(targets.visual, "visual");
    check_distribution(targets.audio, "audio");

    ClassificationLossResult result;
    auto term = [](const Vec& logits, const Vec& c, Vec& d_logits) {
        const Vec log_p = log_softmax(logits);
        const Vec p = softmax(logits);
        double value = 0.0;
        d_logits.resize(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) {
            if (c[k] > 0.0) value -= c[k] * log_p[k];
            d_logits[k] = p[k] - c[k];
        }
        return value;
    };
    result.value = term(logits_visual, targets.visual, result.d_logits_visual) +
                   term(logits_audio, targets.audio, result.d_logits_audio);
    return result;
}

LossBreakdown combined_loss(const PairLossInput& pair, const Vec& p_visual, const Vec& p_audio,
                            const ClassTargets& targets, double lambda, double l2,
                            bool classify_negatives) {
    if (lambda < 0.0) throw DimensionError("combined_loss: lambda must be nonnegative");
    LossBreakdown breakdown;
    breakdown.lambda = lambda;
    breakdown.l2 = l2;
    breakdown.cosine = cosine_embedding_loss(pair).value;
    if (lambda != 0.0 && (pair.y == 1 || classify_negatives)) {
        breakdown.classification = classification_loss(p_visual, p_audio, targets).value;
    }
    breakdown.total = breakdown.cosine + lambda * breakdown.classification + breakdown.l2;
    return breakdown;
}

}  // namespace crossmodal
