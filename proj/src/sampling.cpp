#include "crossmodal/sampling.hpp"

#include <algorithm>

#include "crossmodal/errors.hpp"

namespace crossmodal {

namespace {

// Stream-id tags keeping the derived rng streams of the two entry points and
// the per-epoch permutations disjoint.
constexpr std::uint64_t kBatchStreamTag = 0x6261746368ull;       // "batch"
constexpr std::uint64_t kEpochPermTag = 0x7065726dull;           // "perm"
constexpr std::uint64_t kFreeBatchTag = 0x66726565ull;           // "free"

bool labels_disjoint(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
    // Label sets are sorted; walk them in step.
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return false;
        if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return true;
}

PairSample positive_from(const FeatureRecord& record) {
    PairSample sample;
    sample.audio_features = record.audio;
    sample.visual_features = record.visual;
    sample.y = 1;
    sample.audio_labels = record.labels;
    sample.visual_labels = record.labels;
    sample.audio_source_id = record.id;
    sample.visual_source_id = record.id;
    return sample;
}

PairSample negative_from(const FeatureRecord& audio_side, const FeatureRecord& visual_side) {
    PairSample sample;
    sample.audio_features = audio_side.audio;
    sample.visual_features = visual_side.visual;
    sample.y = -1;
    sample.audio_labels = audio_side.labels;
    sample.visual_labels = visual_side.labels;
    sample.audio_source_id = audio_side.id;
    sample.visual_source_id = visual_side.id;
    return sample;
}

// Finds a record label-disjoint from `anchor`, or throws after the attempt
// bound. Both pairing directions are used, chosen by one extra coin flip.
PairSample negative_for_anchor(const Corpus& corpus, const FeatureRecord& anchor, Rng& rng) {
    for (std::size_t attempt = 0; attempt < kNegativeSampleAttempts; ++attempt) {
        const FeatureRecord& other = corpus[rng.next_below(corpus.size())];
        if (&other == &anchor || other.id == anchor.id) continue;
        if (!labels_disjoint(anchor.labels, other.labels)) continue;
        return rng.next_double() < 0.5 ? negative_from(anchor, other)
                                       : negative_from(other, anchor);
    }
    throw SamplingError("no label-disjoint pair found after " +
                        std::to_string(kNegativeSampleAttempts) + " attempts");
}

}  // namespace

void BatchSpec::validate() const {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (p_negative < 0.0 || p_negative > 1.0) throw ConfigError("p_negative must be in [0, 1]");
}

void validate_sample(const PairSample& sample) {
    if (sample.y == 1) {
        if (sample.audio_source_id != sample.visual_source_id ||
            sample.audio_labels != sample.visual_labels) {
            throw SamplingError("positive pair must come from a single record");
        }
    } else if (sample.y == -1) {
        if (sample.audio_source_id == sample.visual_source_id) {
            throw SamplingError("negative pair re-uses one record");
        }
        if (!labels_disjoint(sample.audio_labels, sample.visual_labels)) {
            throw SamplingError("negative pair shares a label");
        }
    } else {
        throw SamplingError("pair sign must be +1 or -1");
    }
}

std::vector<PairSample> make_batch(const Corpus& corpus, const BatchSpec& spec,
                                   std::uint64_t draw_index) {
    spec.validate();
    if (corpus.empty()) throw SamplingError("cannot sample from an empty corpus");
    Rng rng = Rng::derive(spec.seed ^ kFreeBatchTag, draw_index);
    std::vector<PairSample> batch;
    batch.reserve(spec.batch_size);
    for (std::size_t i = 0; i < spec.batch_size; ++i) {
        const FeatureRecord& anchor = corpus[rng.next_below(corpus.size())];
        if (rng.next_double() < spec.p_negative) {
            batch.push_back(negative_for_anchor(corpus, anchor, rng));
        } else {
            batch.push_back(positive_from(anchor));
        }
    }
    return batch;
}

EpochIterator::EpochIterator(const Corpus& corpus, BatchSpec spec, std::size_t epochs)
    : corpus_(&corpus), spec_(spec), epochs_(epochs) {
    spec_.validate();
    if (corpus.empty()) throw SamplingError("cannot iterate over an empty corpus");
    if (epochs == 0) throw ConfigError("epoch count must be positive");
    batches_per_epoch_ = corpus.size() / spec_.batch_size;
    if (batches_per_epoch_ == 0) {
        throw SamplingError("corpus (" + std::to_string(corpus.size()) +
                            " records) is smaller than one batch of " +
                            std::to_string(spec_.batch_size));
    }
}

std::vector<PairSample> EpochIterator::batch_at(std::size_t global_step) const {
    if (global_step >= total_batches()) {
        throw SamplingError("batch index " + std::to_string(global_step) +
                            " beyond the configured " + std::to_string(total_batches()) +
                            " batches");
    }
    const Corpus& corpus = *corpus_;
    const std::size_t epoch = global_step / batches_per_epoch_;
    const std::size_t batch_in_epoch = global_step % batches_per_epoch_;

    Rng perm_rng = Rng::derive(spec_.seed ^ kEpochPermTag, epoch);
    const std::vector<std::size_t> perm = random_permutation(corpus.size(), perm_rng);

    Rng rng = Rng::derive(spec_.seed ^ kBatchStreamTag, global_step);
    std::vector<PairSample> batch;
    batch.reserve(spec_.batch_size);
    const std::size_t base = batch_in_epoch * spec_.batch_size;
    for (std::size_t i = 0; i < spec_.batch_size; ++i) {
        const FeatureRecord& anchor = corpus[perm[base + i]];
        if (rng.next_double() < spec_.p_negative) {
            batch.push_back(negative_for_anchor(corpus, anchor, rng));
        } else {
            batch.push_back(positive_from(anchor));
        }
    }
    return batch;
}

std::vector<PairSample> EpochIterator::next() {
    return batch_at(cursor_++);
}

}  // namespace crossmodal
