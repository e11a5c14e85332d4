#pragma once

#include <cstdint>
#include <span>

#include "crossmodal/numerics.hpp"

namespace crossmodal {

// One audio/visual embedding pair with its sampling sign.
struct PairLossInput {
    Vec phi_audio;
    Vec phi_visual;
    int y = 1;  // +1 positive pair, -1 negative pair
    double margin_alpha = 0.2;
};

struct CosineLossResult {
    double value = 0.0;
    Vec d_phi_audio;
    Vec d_phi_visual;
    bool degenerate = false;  // a zero-norm embedding was seen
};

// Margin similarity loss:
//   y = +1 -> 1 - cos(phi_a, phi_i)
//   y = -1 -> max(0, cos(phi_a, phi_i) - alpha)
// with exact gradients and subgradient 0 at the hinge point.
CosineLossResult cosine_embedding_loss(const PairLossInput& input);

// Per-modality class targets (one-hot or multi-hot normalized).
struct ClassTargets {
    Vec visual;  // c^i
    Vec audio;   // c^a
};

// Uniform distribution over a label set.
Vec label_distribution(std::span<const std::int32_t> labels, std::size_t num_classes);

struct ClassificationLossResult {
    double value = 0.0;
    Vec d_logits_visual;  // p^i - c^i
    Vec d_logits_audio;   // p^a - c^a
};

// Cross entropy summed over both modalities, -sum_k (c_k log p_k), with the
// 0 * log 0 = 0 convention on zero-weight targets. Inputs are softmax
// probabilities; gradients are with respect to the pre-softmax logits.
ClassificationLossResult classification_loss(const Vec& p_visual, const Vec& p_audio,
                                             const ClassTargets& targets);

// Same value computed straight from logits through log-softmax; used on the
// training path where extreme logits would underflow the probabilities.
ClassificationLossResult classification_loss_from_logits(const Vec& logits_visual,
                                                          const Vec& logits_audio,
                                                          const ClassTargets& targets);

struct LossBreakdown {
    double cosine = 0.0;          // L_cos
    double classification = 0.0;  // L_class (unweighted)
    double l2 = 0.0;
    double lambda = 0.0;
    double total = 0.0;  // cosine + lambda * classification + l2
};

// Per-pair combined objective. The classification term applies to positive
// pairs only unless classify_negatives is set.
LossBreakdown combined_loss(const PairLossInput& pair, const Vec& p_visual, const Vec& p_audio,
                            const ClassTargets& targets, double lambda, double l2,
                            bool classify_negatives = false);

}  // namespace crossmodal
