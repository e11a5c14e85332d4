#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crossmodal/config.hpp"
#include "crossmodal/dataio.hpp"
#include "crossmodal/losses.hpp"
#include "crossmodal/network.hpp"
#include "crossmodal/sampling.hpp"

namespace crossmodal {

// lambda schedule: exactly 0 before the activation step, lambda_value from
// the activation step onward. No ramp.
double lambda_at(std::size_t step, const TrainingConfig& config);

struct TrainState {
    JointModel model;
    GradientSet adam_m;
    GradientSet adam_v;
    std::size_t global_step = 0;
    LossBreakdown last;
};

// Fresh model and zeroed optimizer moments for the config.
TrainState make_state(const TrainingConfig& config);

TrainState state_from_checkpoint(const Checkpoint& checkpoint);
Checkpoint to_checkpoint(const TrainState& state, const TrainingConfig& config);

// Value, tapes and upstream gradients for one batch at a given lambda.
// train_step consumes all of it; the finite-difference checker consumes the
// value only.
struct BatchEvaluation {
    LossBreakdown breakdown;
    std::vector<SampleTapes> tapes;
    std::vector<SampleGrads> grads;
};
BatchEvaluation evaluate_batch(const JointModel& model, const std::vector<PairSample>& batch,
                               double lambda, const TrainingConfig& config);
double batch_loss_value(const JointModel& model, const std::vector<PairSample>& batch,
                        double lambda, const TrainingConfig& config);

// One optimizer update from the mean batch gradient of the combined
// objective. Aborts with TrainingError on a non-finite loss or gradient,
// naming the step and offending parameter block.
LossBreakdown train_step(TrainState& state, const std::vector<PairSample>& batch,
                         const TrainingConfig& config);

struct LogRow {
    std::size_t step = 0;
    double lambda = 0.0;
    double cosine = 0.0;
    double classification = 0.0;
    double l2 = 0.0;
    double total = 0.0;
};

// Tab-separated log line; header_row() names the columns.
std::string format_log_row(const LogRow& row);
std::string log_header_row();

struct FitResult {
    TrainState state;
    std::vector<LogRow> log;
};

using LogCallback = std::function<void(const LogRow&)>;

// Full training run: epochs * (corpus size / batch size) steps, one log row
// per step. Deterministic for a fixed (corpus, config, seed).
FitResult fit(const Corpus& corpus, const TrainingConfig& config, const LogCallback& on_row = {});

// Continues from an existing state (e.g. a loaded checkpoint) until the
// configured number of steps is reached; the resumed trajectory matches an
// uninterrupted run exactly.
FitResult resume_fit(TrainState state, const Corpus& corpus, const TrainingConfig& config,
                     const LogCallback& on_row = {});

struct GradientCheckReport {
    std::size_t trials = 0;
    std::size_t parameters_checked = 0;
    double max_rel_error = 0.0;
    std::string worst_block;
    std::size_t worst_index = 0;
    bool passed = false;
};

// Compares every analytic partial derivative against central finite
// differences (step 1e-5) on `trials` random tiny models and batches built
// from the config dims; passes iff the max relative error (absolute floor
// 1e-7) stays below 1e-4. The lambda path checked is lambda_at(0, config).
// `corrupt_gradient` adds an offset to one analytic partial; it exists so
// tests can confirm the checker flags wrong gradients.
GradientCheckReport check_gradients(const TrainingConfig& config, std::size_t trials,
                                    double corrupt_gradient = 0.0);

}  // namespace crossmodal
