#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossmodal/dataio.hpp"
#include "crossmodal/numerics.hpp"

namespace crossmodal {

// One training pair. Positive pairs take both sides from the same record;
// negative pairs combine two records whose label sets are disjoint.
struct PairSample {
    Vec audio_features;
    Vec visual_features;
    int y = 1;  // +1 positive, -1 negative
    std::vector<std::int32_t> audio_labels;
    std::vector<std::int32_t> visual_labels;
    std::string audio_source_id;
    std::string visual_source_id;
};

struct BatchSpec {
    std::size_t batch_size = 1024;
    double p_negative = 0.6;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Checks the PairSample invariants; throws SamplingError on violation.
void validate_sample(const PairSample& sample);

// Rejection attempts allowed when hunting for a label-disjoint pair.
inline constexpr std::size_t kNegativeSampleAttempts = 1000;

// One batch of uniformly random anchors. Each slot flips an independent
// Bernoulli(p_negative) coin; negatives rejection-sample record pairs until
// the label sets are disjoint. draw_index selects an independent,
// reproducible position in the seed's batch stream.
std::vector<PairSample> make_batch(const Corpus& corpus, const BatchSpec& spec,
                                   std::uint64_t draw_index = 0);

// Deterministic epoch-ordered batch stream: anchors sweep a fresh shuffled
// permutation of the corpus each epoch (one anchor per emitted sample), and
// each anchor independently becomes a positive pair or one side of a
// negative pair. Batches are addressable by global step, so a run can resume
// anywhere without replaying. A corpus tail smaller than one batch is
// dropped.
class EpochIterator {
  public:
    EpochIterator(const Corpus& corpus, BatchSpec spec, std::size_t epochs = 1);

    std::size_t batches_per_epoch() const { return batches_per_epoch_; }
    std::size_t total_batches() const { return batches_per_epoch_ * epochs_; }

    // Batch for an absolute step in [0, total_batches).
    std::vector<PairSample> batch_at(std::size_t global_step) const;

    // Sequential interface over the same stream.
    bool has_next() const { return cursor_ < total_batches(); }
    std::vector<PairSample> next();

  private:
    const Corpus* corpus_;
    BatchSpec spec_;
    std::size_t epochs_;
    std::size_t batches_per_epoch_;
    std::size_t cursor_ = 0;
};

}  // namespace crossmodal
