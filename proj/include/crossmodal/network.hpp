#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crossmodal/numerics.hpp"

namespace crossmodal {

enum class Activation { Relu, Identity };

struct DenseLayer {
    Matrix weights;  // out x in
    Vec bias;        // out
    Activation activation = Activation::Relu;
};

// One MLP branch: hidden layers with ReLU, final projection with identity
// activation so embeddings can reach the full sphere.
struct BranchNetwork {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().weights.cols; }
    std::size_t embedding_dim() const { return layers.back().weights.rows; }
};

// Both branches plus the classification weights shared between them.
struct JointModel {
    BranchNetwork visual;
    BranchNetwork audio;
    Matrix classifier;  // num_classes x embedding_dim, no bias

    std::size_t embedding_dim() const { return classifier.cols; }
    std::size_t num_classes() const { return classifier.rows; }
};

// Architecture description used to build a model.
struct ModelConfig {
    std::size_t visual_input_dim = 1024;
    std::size_t audio_input_dim = 128;
    std::vector<std::size_t> visual_widths = {2000, 2000, 700, 700};
    std::vector<std::size_t> audio_widths = {450, 450, 200, 200};
    std::size_t embedding_dim = 250;
    std::size_t num_classes = 1;

    void validate() const;  // throws ConfigError
};

// Cached intermediates from one branch forward pass, consumed by backward.
struct ForwardTape {
    Vec input;
    std::vector<Vec> pre_activations;
    std::vector<Vec> activations;
};

struct BranchForward {
    Vec embedding;
    ForwardTape tape;
};

struct LayerGrads {
    Matrix weights;
    Vec bias;
};

// Gradients shaped exactly like JointModel.
struct GradientSet {
    std::vector<LayerGrads> visual;
    std::vector<LayerGrads> audio;
    Matrix classifier;
};

// Tapes for one training pair.
struct SampleTapes {
    ForwardTape visual;
    ForwardTape audio;
};

// Upstream gradients for one training pair. d_logits_* are empty when the
// classification term does not apply to the pair; any weighting (lambda,
// sign) is already folded in by the caller.
struct SampleGrads {
    Vec d_phi_visual;
    Vec d_phi_audio;
    Vec d_logits_visual;
    Vec d_logits_audio;
};

struct BackwardOptions {
    double sample_scale = 1.0;  // e.g. 1/batch for a mean reduction
    double l2_coefficient = 0.0;
    bool l2_includes_classifier = false;
};

// Fan-in-scaled uniform init, zero biases, deterministic draw order
// (visual layers, audio layers, classifier).
JointModel init_model(const ModelConfig& config, Rng& rng);

BranchForward forward_branch(const BranchNetwork& branch, const Vec& features);

Vec classifier_logits(const JointModel& model, const Vec& embedding);

// softmax(W * embedding)
Vec forward_classifier(const JointModel& model, const Vec& embedding);

// Exact analytic gradients of
//   sum_s sample_scale * [ <d_phi_s, phi_s> + <d_logits_s, logits_s> paths ]
//   + l2_coefficient * sum(branch weights^2) [+ classifier when configured]
// with the classifier gradient collecting both modalities' contributions.
GradientSet backward(const JointModel& model, std::span<const SampleTapes> tapes,
                     std::span<const SampleGrads> grads, const BackwardOptions& options);

// coefficient * sum of squared branch layer weights; biases excluded,
// classifier included only on request.
double l2_penalty(const JointModel& model, double coefficient,
                  bool include_classifier = false);

GradientSet zeros_like(const JointModel& model);

// Flat named views over every parameter, in a stable order shared between
// JointModel and GradientSet. Used by the optimizer, the finite-difference
// checker and checkpoint serialization.
struct ParamView {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
};
struct ConstParamView {
    std::string name;
    const double* data = nullptr;
    std::size_t size = 0;
};

std::vector<ParamView> parameter_views(JointModel& model);
std::vector<ConstParamView> parameter_views(const JointModel& model);
std::vector<ParamView> parameter_views(GradientSet& grads);
std::vector<ConstParamView> parameter_views(const GradientSet& grads);

}  // namespace crossmodal
