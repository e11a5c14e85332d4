#include "crossmodal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crossmodal/errors.hpp"

namespace crossmodal {

namespace {

constexpr std::uint64_t kModelInitStream = 0x6d6f64656cull;  // "model"

bool classification_applies(const PairSample& sample, double lambda,
                            const TrainingConfig& config) {
    return lambda != 0.0 && (sample.y == 1 || config.classify_negative_pairs);
}

void check_finite_breakdown(const LossBreakdown& b, std::size_t step) {
    if (std::isfinite(b.total)) return;
    std::ostringstream msg;
    msg << "step " << step << ": non-finite loss (cosine=" << b.cosine
        << ", classification=" << b.classification << ", l2=" << b.l2 << ", lambda=" << b.lambda
        << ", total=" << b.total << ")";
    throw TrainingError(msg.str());
}

void check_finite_gradients(const GradientSet& grads, std::size_t step) {
    for (const ConstParamView& view : parameter_views(grads)) {
        for (std::size_t i = 0; i < view.size; ++i) {
            if (!std::isfinite(view.data[i])) {
                throw TrainingError("step " + std::to_string(step) +
                                    ": non-finite gradient in parameter block " + view.name +
                                    " at index " + std::to_string(i));
            }
        }
    }
}

void apply_update(TrainState& state, const GradientSet& grads, const TrainingConfig& config) {
    auto params = parameter_views(state.model);
    const std::vector<ConstParamView> gs = parameter_views(grads);
    if (config.optimizer == OptimizerKind::Sgd) {
        for (std::size_t b = 0; b < params.size(); ++b) {
            for (std::size_t i = 0; i < params[b].size; ++i) {
                params[b].data[i] -= config.learning_rate * gs[b].data[i];
            }
        }
        return;
    }
    auto ms = parameter_views(state.adam_m);
    auto vs = parameter_views(state.adam_v);
    const double t = static_cast<double>(state.global_step + 1);
    const double bias1 = 1.0 - std::pow(config.adam_beta1, t);
    const double bias2 = 1.0 - std::pow(config.adam_beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        double* p = params[b].data;
        const double* g = gs[b].data;
        double* m = ms[b].data;
        double* v = vs[b].data;
        for (std::size_t i = 0; i < params[b].size; ++i) {
            m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
            v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

// Central differences are only valid away from the loss's kinks: a 1e-5
// parameter step must not cross a ReLU boundary or the hinge at cos == alpha.
// The band is two orders of magnitude above the step size.
bool batch_is_fd_safe(const JointModel& model, const std::vector<PairSample>& batch,
                      const TrainingConfig& config) {
    constexpr double kKinkBand = 1e-3;
    for (const PairSample& sample : batch) {
        const BranchForward visual = forward_branch(model.visual, sample.visual_features);
        const BranchForward audio = forward_branch(model.audio, sample.audio_features);
        for (const BranchForward* side : {&visual, &audio}) {
            const BranchNetwork& branch = side == &visual ? model.visual : model.audio;
            for (std::size_t l = 0; l < branch.layers.size(); ++l) {
                if (branch.layers[l].activation != Activation::Relu) continue;
                for (const double z : side->tape.pre_activations[l]) {
                    if (std::abs(z) < kKinkBand) return false;
                }
            }
        }
        const double cos = cosine_similarity(audio.embedding, visual.embedding);
        if (norm(audio.embedding) < 1e-6 || norm(visual.embedding) < 1e-6) return false;
        if (sample.y == -1 && std::abs(cos - config.margin_alpha) < kKinkBand) return false;
    }
    return true;
}

// Random pairs for the gradient checker: features are standard normal,
// signs alternate, labels are drawn so negatives stay label-disjoint.
std::vector<PairSample> random_check_batch(const TrainingConfig& config, Rng& rng,
                                           std::size_t batch_size) {
    std::vector<PairSample> batch;
    batch.reserve(batch_size);
    for (std::size_t s = 0; s < batch_size; ++s) {
        PairSample sample;
        sample.visual_features.resize(config.visual_input_dim);
        for (double& x : sample.visual_features) x = rng.next_normal();
        sample.audio_features.resize(config.audio_input_dim);
        for (double& x : sample.audio_features) x = rng.next_normal();
        sample.y = (s % 2 == 0) ? 1 : -1;
        const auto c1 = static_cast<std::int32_t>(rng.next_below(config.num_classes));
        if (sample.y == 1) {
            sample.visual_labels = {c1};
            sample.audio_labels = {c1};
            sample.visual_source_id = sample.audio_source_id = "check-" + std::to_string(s);
        } else {
            auto c2 = c1;
            if (config.num_classes > 1) {
                while (c2 == c1) {
                    c2 = static_cast<std::int32_t>(rng.next_below(config.num_classes));
                }
            }
            sample.audio_labels = {c1};
            sample.visual_labels = {c2};
            sample.audio_source_id = "check-a-" + std::to_string(s);
            sample.visual_source_id = "check-v-" + std::to_string(s);
        }
        batch.push_back(std::move(sample));
    }
    return batch;
}

}  // namespace

void TrainingConfig::validate() const {
    model_config().validate();
    if (margin_alpha < 0.0 || margin_alpha >= 1.0) {
        throw ConfigError("margin alpha must be in [0, 1)");
    }
    if (p_negative < 0.0 || p_negative > 1.0) throw ConfigError("p_negative must be in [0, 1]");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (epochs == 0) throw ConfigError("epoch count must be positive");
    if (lambda_value < 0.0) throw ConfigError("lambda must be nonnegative");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be nonnegative");
    if (l2_coefficient < 0.0) throw ConfigError("l2 coefficient must be nonnegative");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("adam betas must be in [0, 1)");
    }
    if (adam_epsilon <= 0.0) throw ConfigError("adam epsilon must be positive");
}

double lambda_at(std::size_t step, const TrainingConfig& config) {
    return step < config.lambda_activation_step ? 0.0 : config.lambda_value;
}

TrainState make_state(const TrainingConfig& config) {
    config.validate();
    TrainState state;
    Rng rng = Rng::derive(config.seed, kModelInitStream);
    state.model = init_model(config.model_config(), rng);
    state.adam_m = zeros_like(state.model);
    state.adam_v = zeros_like(state.model);
    return state;
}

TrainState state_from_checkpoint(const Checkpoint& checkpoint) {
    TrainState state;
    state.model = checkpoint.model;
    if (checkpoint.has_moments) {
        state.adam_m = checkpoint.adam_m;
        state.adam_v = checkpoint.adam_v;
    } else {
        state.adam_m = zeros_like(state.model);
        state.adam_v = zeros_like(state.model);
    }
    state.global_step = checkpoint.global_step;
    return state;
}

Checkpoint to_checkpoint(const TrainState& state, const TrainingConfig& config) {
    Checkpoint checkpoint;
    checkpoint.config = config;
    checkpoint.model = state.model;
    checkpoint.global_step = state.global_step;
    checkpoint.has_moments = true;
    checkpoint.adam_m = state.adam_m;
    checkpoint.adam_v = state.adam_v;
    return checkpoint;
}

BatchEvaluation evaluate_batch(const JointModel& model, const std::vector<PairSample>& batch,
                               double lambda, const TrainingConfig& config) {
    if (batch.empty()) throw DimensionError("evaluate_batch: empty batch");
    BatchEvaluation eval;
    eval.tapes.reserve(batch.size());
    eval.grads.reserve(batch.size());
    double cosine_sum = 0.0;
    double class_sum = 0.0;

    for (const PairSample& sample : batch) {
        BranchForward visual = forward_branch(model.visual, sample.visual_features);
        BranchForward audio = forward_branch(model.audio, sample.audio_features);

        PairLossInput pair{audio.embedding, visual.embedding, sample.y, config.margin_alpha};
        CosineLossResult cosine = cosine_embedding_loss(pair);
        cosine_sum += cosine.value;

        SampleGrads grads;
        grads.d_phi_audio = std::move(cosine.d_phi_audio);
        grads.d_phi_visual = std::move(cosine.d_phi_visual);

        if (classification_applies(sample, lambda, config)) {
            const Vec logits_visual = classifier_logits(model, visual.embedding);
            const Vec logits_audio = classifier_logits(model, audio.embedding);
            ClassTargets targets{
                label_distribution(sample.visual_labels, model.num_classes()),
                label_distribution(sample.audio_labels, model.num_classes())};
            ClassificationLossResult cls =
                classification_loss_from_logits(logits_visual, logits_audio, targets);
            class_sum += cls.value;
            grads.d_logits_visual = std::move(cls.d_logits_visual);
            grads.d_logits_audio = std::move(cls.d_logits_audio);
            for (double& g : grads.d_logits_visual) g *= lambda;
            for (double& g : grads.d_logits_audio) g *= lambda;
        }

        eval.tapes.push_back({std::move(visual.tape), std::move(audio.tape)});
        eval.grads.push_back(std::move(grads));
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    eval.breakdown.cosine = cosine_sum * scale;
    eval.breakdown.classification = class_sum * scale;
    eval.breakdown.l2 =
        l2_penalty(model, config.l2_coefficient, config.l2_includes_classifier);
    eval.breakdown.lambda = lambda;
    eval.breakdown.total = eval.breakdown.cosine + lambda * eval.breakdown.classification +
                           eval.breakdown.l2;
    return eval;
}

double batch_loss_value(const JointModel& model, const std::vector<PairSample>& batch,
                        double lambda, const TrainingConfig& config) {
    return evaluate_batch(model, batch, lambda, config).breakdown.total;
}

LossBreakdown train_step(TrainState& state, const std::vector<PairSample>& batch,
                         const TrainingConfig& config) {
    const double lambda = lambda_at(state.global_step, config);
    BatchEvaluation eval = evaluate_batch(state.model, batch, lambda, config);
    check_finite_breakdown(eval.breakdown, state.global_step);

    BackwardOptions options;
    options.sample_scale = 1.0 / static_cast<double>(batch.size());
    options.l2_coefficient = config.l2_coefficient;
    options.l2_includes_classifier = config.l2_includes_classifier;
    const GradientSet grads = backward(state.model, eval.tapes, eval.grads, options);
    check_finite_gradients(grads, state.global_step);

    apply_update(state, grads, config);
    state.global_step += 1;
    state.last = eval.breakdown;
    return eval.breakdown;
}

std::string log_header_row() {
    return "step\tlambda\tl_cos\tl_class\tl2\ttotal";
}

std::string format_log_row(const LogRow& row) {
    std::ostringstream out;
    out.precision(12);
    out << row.step << '\t' << row.lambda << '\t' << row.cosine << '\t' << row.classification
        << '\t' << row.l2 << '\t' << row.total;
    return out.str();
}

namespace {

FitResult run_fit(TrainState state, const Corpus& corpus, const TrainingConfig& config,
                  const LogCallback& on_row) {
    config.validate();
    if (corpus.empty()) throw ConfigError("fit: empty corpus");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (const std::int32_t label : corpus[i].labels) {
            if (static_cast<std::size_t>(label) >= config.num_classes) {
                throw ConfigError("fit: record " + std::to_string(i) + " ('" + corpus[i].id +
                                  "') has label " + std::to_string(label) +
                                  " outside the configured " +
                                  std::to_string(config.num_classes) + " classes");
            }
        }
        if (corpus[i].visual.size() != config.visual_input_dim ||
            corpus[i].audio.size() != config.audio_input_dim) {
            throw ConfigError("fit: record " + std::to_string(i) + " ('" + corpus[i].id +
                              "') does not match the configured feature dimensions");
        }
    }

    EpochIterator batches(corpus, BatchSpec{config.batch_size, config.p_negative, config.seed},
                          config.epochs);
    FitResult result;
    for (std::size_t step = state.global_step; step < batches.total_batches(); ++step) {
        const LossBreakdown breakdown = train_step(state, batches.batch_at(step), config);
        LogRow row{step, breakdown.lambda, breakdown.cosine, breakdown.classification,
                   breakdown.l2, breakdown.total};
        result.log.push_back(row);
        if (on_row) on_row(row);
    }
    result.state = std::move(state);
    return result;
}

}  // namespace

FitResult fit(const Corpus& corpus, const TrainingConfig& config, const LogCallback& on_row) {
    return run_fit(make_state(config), corpus, config, on_row);
}

FitResult resume_fit(TrainState state, const Corpus& corpus, const TrainingConfig& config,
                     const LogCallback& on_row) {
    return run_fit(std::move(state), corpus, config, on_row);
}

GradientCheckReport check_gradients(const TrainingConfig& config, std::size_t trials,
                                    double corrupt_gradient) {
    if (trials == 0) throw ConfigError("check_gradients: trials must be positive");
    config.validate();

    constexpr double kStep = 1e-5;
    constexpr double kDenomFloor = 1e-3;  // makes the 1e-4 gate a 1e-7 absolute floor

    GradientCheckReport report;
    report.trials = trials;
    const double lambda = lambda_at(0, config);

    for (std::size_t trial = 0; trial < trials; ++trial) {
        Rng rng = Rng::derive(config.seed, 0xfd000000ull + trial);
        JointModel model = init_model(config.model_config(), rng);
        std::vector<PairSample> batch = random_check_batch(config, rng, 4);
        for (int attempt = 0; attempt < 100 && !batch_is_fd_safe(model, batch, config);
             ++attempt) {
            batch = random_check_batch(config, rng, 4);
        }

        BatchEvaluation eval = evaluate_batch(model, batch, lambda, config);
        BackwardOptions options;
        options.sample_scale = 1.0 / static_cast<double>(batch.size());
        options.l2_coefficient = config.l2_coefficient;
        options.l2_includes_classifier = config.l2_includes_classifier;
        GradientSet analytic = backward(model, eval.tapes, eval.grads, options);

        auto analytic_views = parameter_views(analytic);
        if (corrupt_gradient != 0.0 && !analytic_views.empty() && analytic_views[0].size > 0) {
            analytic_views[0].data[0] += corrupt_gradient;
        }

        auto param_views = parameter_views(model);
        for (std::size_t b = 0; b < param_views.size(); ++b) {
            for (std::size_t i = 0; i < param_views[b].size; ++i) {
                double& p = param_views[b].data[i];
                const double saved = p;
                p = saved + kStep;
                const double up = batch_loss_value(model, batch, lambda, config);
                p = saved - kStep;
                const double down = batch_loss_value(model, batch, lambda, config);
                p = saved;
                const double fd = (up - down) / (2.0 * kStep);
                const double a = analytic_views[b].data[i];
                const double rel =
                    std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kDenomFloor});
                ++report.parameters_checked;
                if (rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_block = param_views[b].name;
                    report.worst_index = i;
                }
            }
        }
    }
    report.passed = report.max_rel_error < 1e-4;
    return report;
}

}  // namespace crossmodal
