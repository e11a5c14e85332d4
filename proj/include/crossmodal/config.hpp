#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "crossmodal/network.hpp"

namespace crossmodal {

enum class OptimizerKind : std::uint8_t { Adam = 0, Sgd = 1 };

// Everything a training run depends on. Defaults follow the reference
// experiment setup; all of them are plain configuration.
struct TrainingConfig {
    double margin_alpha = 0.2;
    double p_negative = 0.6;
    std::size_t batch_size = 1024;
    double lambda_value = 0.02;
    std::size_t lambda_activation_step = 10000;
    std::size_t epochs = 1;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double l2_coefficient = 1e-5;
    bool l2_includes_classifier = false;
    bool classify_negative_pairs = false;
    std::vector<std::size_t> visual_widths = {2000, 2000, 700, 700};
    std::vector<std::size_t> audio_widths = {450, 450, 200, 200};
    std::size_t embedding_dim = 250;
    std::size_t visual_input_dim = 1024;
    std::size_t audio_input_dim = 128;
    std::size_t num_classes = 1;
    std::uint64_t seed = 0;

    ModelConfig model_config() const {
        return ModelConfig{visual_input_dim, audio_input_dim, visual_widths,
                           audio_widths,     embedding_dim,   num_classes};
    }

    void validate() const;  // throws ConfigError
};

}  // namespace crossmodal
