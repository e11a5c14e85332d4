#include "crossmodal/network.hpp"

#include <cmath>

#include "crossmodal/errors.hpp"
#include "crossmodal/kernels.hpp"

namespace crossmodal {

namespace {

void check_positive(std::size_t value, const char* what) {
    if (value == 0) throw ConfigError(std::string(what) + " must be positive");
}

DenseLayer make_layer(std::size_t out_dim, std::size_t in_dim, Activation activation, Rng& rng) {
    DenseLayer layer;
    layer.weights = Matrix(out_dim, in_dim);
    layer.bias = Vec(out_dim, 0.0);
    layer.activation = activation;
    const double scale = std::sqrt(1.0 / static_cast<double>(in_dim));
    for (double& w : layer.weights.data) w = (2.0 * rng.next_double() - 1.0) * scale;
    return layer;
}

BranchNetwork make_branch(std::size_t input_dim, const std::vector<std::size_t>& widths,
                          std::size_t embedding_dim, Rng& rng) {
    BranchNetwork branch;
    std::size_t in = input_dim;
    for (const std::size_t width : widths) {
        branch.layers.push_back(make_layer(width, in, Activation::Relu, rng));
        in = width;
    }
    branch.layers.push_back(make_layer(embedding_dim, in, Activation::Identity, rng));
    return branch;
}

void check_tape(const BranchNetwork& branch, const ForwardTape& tape, const char* which) {
    if (tape.pre_activations.size() != branch.layers.size() ||
        tape.activations.size() != branch.layers.size() ||
        tape.input.size() != branch.input_dim()) {
        throw DimensionError(std::string("backward: ") + which +
                             " tape does not match the branch that should have produced it");
    }
    for (std::size_t l = 0; l < branch.layers.size(); ++l) {
        if (tape.pre_activations[l].size() != branch.layers[l].weights.rows) {
            throw DimensionError(std::string("backward: ") + which + " tape layer " +
                                 std::to_string(l) + " has the wrong width");
        }
    }
}

// Accumulates one sample's branch gradients; returns nothing, d is consumed.
void branch_backward(const BranchNetwork& branch, const ForwardTape& tape, Vec d, double scale,
                     std::vector<LayerGrads>& out) {
    for (std::size_t l = branch.layers.size(); l-- > 0;) {
        const DenseLayer& layer = branch.layers[l];
        if (layer.activation == Activation::Relu) {
            const Vec& z = tape.pre_activations[l];
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (z[i] <= 0.0) d[i] = 0.0;
            }
        }
        const Vec& a_prev = (l == 0) ? tape.input : tape.activations[l - 1];
        kernels::add_outer_product(out[l].weights.data.data(), layer.weights.rows,
                                   layer.weights.cols, d.data(), a_prev.data(), scale);
        for (std::size_t i = 0; i < d.size(); ++i) out[l].bias[i] += scale * d[i];
        if (l > 0) {
            Vec d_prev(layer.weights.cols);
            kernels::matvec_transposed(d_prev.data(), layer.weights.data.data(),
                                       layer.weights.rows, layer.weights.cols, d.data());
            d = std::move(d_prev);
        }
    }
}

}  // namespace

void ModelConfig::validate() const {
    check_positive(visual_input_dim, "visual input dim");
    check_positive(audio_input_dim, "audio input dim");
    check_positive(embedding_dim, "embedding dim");
    check_positive(num_classes, "class count");
    for (const std::size_t w : visual_widths) check_positive(w, "visual layer width");
    for (const std::size_t w : audio_widths) check_positive(w, "audio layer width");
}

JointModel init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    JointModel model;
    model.visual = make_branch(config.visual_input_dim, config.visual_widths,
                               config.embedding_dim, rng);
    model.audio = make_branch(config.audio_input_dim, config.audio_widths,
                              config.embedding_dim, rng);
    const double scale = std::sqrt(1.0 / static_cast<double>(config.embedding_dim));
    model.classifier = Matrix(config.num_classes, config.embedding_dim);
    for (double& w : model.classifier.data) w = (2.0 * rng.next_double() - 1.0) * scale;
    return model;
}

BranchForward forward_branch(const BranchNetwork& branch, const Vec& features) {
    if (features.size() != branch.input_dim()) {
        throw DimensionError("forward_branch: expected input of length " +
                             std::to_string(branch.input_dim()) + ", got " +
                             std::to_string(features.size()));
    }
    BranchForward result;
    result.tape.input = features;
    result.tape.pre_activations.reserve(branch.layers.size());
    result.tape.activations.reserve(branch.layers.size());
    const Vec* current = &features;
    for (const DenseLayer& layer : branch.layers) {
        Vec z = matvec(layer.weights, *current);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        Vec a = (layer.activation == Activation::Relu) ? relu(z) : z;
        result.tape.pre_activations.push_back(std::move(z));
        result.tape.activations.push_back(std::move(a));
        current = &result.tape.activations.back();
    }
    result.embedding = result.tape.activations.back();
    return result;
}

Vec classifier_logits(const JointModel& model, const Vec& embedding) {
    return matvec(model.classifier, embedding);
}

Vec forward_classifier(const JointModel& model, const Vec& embedding) {
    return softmax(classifier_logits(model, embedding));
}

GradientSet zeros_like(const JointModel& model) {
    GradientSet grads;
    auto zero_branch = [](const BranchNetwork& branch) {
        std::vector<LayerGrads> out;
        out.reserve(branch.layers.size());
        for (const DenseLayer& layer : branch.layers) {
            out.push_back({Matrix(layer.weights.rows, layer.weights.cols),
                           Vec(layer.bias.size(), 0.0)});
        }
        return out;
    };
    grads.visual = zero_branch(model.visual);
    grads.audio = zero_branch(model.audio);
    grads.classifier = Matrix(model.classifier.rows, model.classifier.cols);
    return grads;
}

GradientSet backward(const JointModel& model, std::span<const SampleTapes> tapes,
                     std::span<const SampleGrads> grads, const BackwardOptions& options) {
    if (tapes.size() != grads.size()) {
        throw DimensionError("backward: tape count does not match gradient count");
    }
    GradientSet out = zeros_like(model);
    const std::size_t d = model.embedding_dim();

    for (std::size_t s = 0; s < tapes.size(); ++s) {
        check_tape(model.visual, tapes[s].visual, "visual");
        check_tape(model.audio, tapes[s].audio, "audio");
        const Vec& phi_visual = tapes[s].visual.activations.back();
        const Vec& phi_audio = tapes[s].audio.activations.back();

        auto modality = [&](const Vec& d_phi, const Vec& d_logits, const Vec& phi,
                            const BranchNetwork& branch, const ForwardTape& tape,
                            std::vector<LayerGrads>& branch_out) {
            Vec d_total = d_phi.empty() ? Vec(d, 0.0) : d_phi;
            if (d_total.size() != d) {
                throw DimensionError("backward: upstream embedding gradient has wrong length");
            }
            if (!d_logits.empty()) {
                if (d_logits.size() != model.num_classes()) {
                    throw DimensionError("backward: upstream logit gradient has wrong length");
                }
                // Shared classifier collects contributions from both paths.
                kernels::add_outer_product(out.classifier.data.data(), model.classifier.rows,
                                           model.classifier.cols, d_logits.data(), phi.data(),
                                           options.sample_scale);
                Vec through(d);
                kernels::matvec_transposed(through.data(), model.classifier.data.data(),
                                           model.classifier.rows, model.classifier.cols,
                                           d_logits.data());
                for (std::size_t i = 0; i < d; ++i) d_total[i] += through[i];
            }
            branch_backward(branch, tape, std::move(d_total), options.sample_scale, branch_out);
        };

        modality(grads[s].d_phi_visual, grads[s].d_logits_visual, phi_visual, model.visual,
                 tapes[s].visual, out.visual);
        modality(grads[s].d_phi_audio, grads[s].d_logits_audio, phi_audio, model.audio,
                 tapes[s].audio, out.audio);
    }

    if (options.l2_coefficient != 0.0) {
        const double c2 = 2.0 * options.l2_coefficient;
        auto add_l2 = [c2](const std::vector<DenseLayer>& layers, std::vector<LayerGrads>& gs) {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const auto& w = layers[l].weights.data;
                auto& g = gs[l].weights.data;
                for (std::size_t i = 0; i < w.size(); ++i) g[i] += c2 * w[i];
            }
        };
        add_l2(model.visual.layers, out.visual);
        add_l2(model.audio.layers, out.audio);
        if (options.l2_includes_classifier) {
            for (std::size_t i = 0; i < model.classifier.data.size(); ++i) {
                out.classifier.data[i] += c2 * model.classifier.data[i];
            }
        }
    }
    return out;
}

double l2_penalty(const JointModel& model, double coefficient, bool include_classifier) {
    double sum = 0.0;
    for (const BranchNetwork* branch : {&model.visual, &model.audio}) {
        for (const DenseLayer& layer : branch->layers) {
            for (const double w : layer.weights.data) sum += w * w;
        }
    }
    if (include_classifier) {
        for (const double w : model.classifier.data) sum += w * w;
    }
    return coefficient * sum;
}

namespace {

template <typename View, typename Model>
std::vector<View> collect_views(Model& m) {
    std::vector<View> views;
    auto add = [&views](const std::string& name, auto& container) {
        views.push_back({name, container.data(), container.size()});
    };
    auto add_branch = [&](const char* prefix, auto& branch_layers) {
        for (std::size_t l = 0; l < branch_layers.size(); ++l) {
            const std::string base = std::string(prefix) + ".layer" + std::to_string(l);
            add(base + ".weights", branch_layers[l].weights.data);
            add(base + ".bias", branch_layers[l].bias);
        }
    };
    if constexpr (requires { m.visual.layers; }) {
        add_branch("visual", m.visual.layers);
        add_branch("audio", m.audio.layers);
    } else {
        add_branch("visual", m.visual);
        add_branch("audio", m.audio);
    }
    add("classifier.weights", m.classifier.data);
    return views;
}

}  // namespace

std::vector<ParamView> parameter_views(JointModel& model) {
    return collect_views<ParamView>(model);
}
std::vector<ConstParamView> parameter_views(const JointModel& model) {
    return collect_views<ConstParamView>(model);
}
std::vector<ParamView> parameter_views(GradientSet& grads) {
    return collect_views<ParamView>(grads);
}
std::vector<ConstParamView> parameter_views(const GradientSet& grads) {
    return collect_views<ConstParamView>(grads);
}

}  // namespace crossmodal
