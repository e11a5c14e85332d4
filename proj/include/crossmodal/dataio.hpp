#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossmodal/config.hpp"
#include "crossmodal/network.hpp"
#include "crossmodal/numerics.hpp"

namespace crossmodal {

// One video: its id, class labels and the two precomputed feature vectors.
struct FeatureRecord {
    std::string id;
    std::vector<std::int32_t> labels;  // sorted, unique, nonnegative
    Vec visual;
    Vec audio;
};

using Corpus = std::vector<FeatureRecord>;

// Validates a single record's invariants; throws FormatError.
void validate_record(const FeatureRecord& record, std::size_t index);

// Binary corpus file. Layout (all little-endian):
//   magic "AVCORPUS" (8 bytes), u32 version, u64 record count,
//   u32 visual dim, u32 audio dim, u32 class count,
//   then per record: u32 id length, id bytes, u32 label count, i32 labels,
//   f32 visual features, f32 audio features.
// Features round-trip at 32-bit precision. Writes go to a temp file that is
// atomically renamed into place.
void write_corpus(const std::string& path, const Corpus& records);
Corpus read_corpus(const std::string& path);

// Reads only the header of a corpus file.
struct CorpusHeader {
    std::uint32_t version = 0;
    std::uint64_t count = 0;
    std::uint32_t visual_dim = 0;
    std::uint32_t audio_dim = 0;
    std::uint32_t class_count = 0;
};
CorpusHeader read_corpus_header(const std::string& path);

// CSV interchange: one record per line,
//   id,<labels joined by ';'>,<visual floats joined by ';'>,<audio floats joined by ';'>
// Failures report the 1-based line number.
Corpus import_csv(const std::string& path);
void export_csv(const std::string& path, const Corpus& records);

// Synthetic corpus: each class owns a latent concept vector; a record's
// latent is its class concept (mean of concepts for multi-label records)
// plus a per-record latent perturbation of scale noise_sigma shared by both
// modalities; features are fixed random linear maps of that latent plus
// per-modality noise of the same scale. noise_sigma = 0 therefore makes
// same-class records identical. Primary labels cycle through all classes so
// any corpus with >= 2 classes and >= 2 records admits negative sampling
// when labels_per_record == 1.
struct SyntheticSpec {
    std::size_t num_records = 0;
    std::size_t num_classes = 2;
    std::size_t latent_dim = 16;
    double noise_sigma = 0.1;
    std::size_t labels_per_record = 1;
    std::size_t visual_dim = 1024;
    std::size_t audio_dim = 128;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

Corpus generate_synthetic(const SyntheticSpec& spec);

// Training checkpoint: config, model parameters and optimizer moments at a
// given step, 64-bit precision throughout, versioned little-endian layout.
struct Checkpoint {
    TrainingConfig config;
    JointModel model;
    std::uint64_t global_step = 0;
    bool has_moments = false;
    GradientSet adam_m;
    GradientSet adam_v;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace crossmodal
