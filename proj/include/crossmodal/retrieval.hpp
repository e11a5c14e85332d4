#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crossmodal/dataio.hpp"
#include "crossmodal/network.hpp"
#include "crossmodal/numerics.hpp"

namespace crossmodal {

// Query modality -> candidate modality.
enum class Direction { AudioToVideo, VideoToAudio };

const char* direction_name(Direction direction);

// Immutable, index-aligned embeddings of a corpus under one model.
struct EmbeddingStore {
    std::vector<std::string> ids;
    Matrix visual_embeddings;  // N x d
    Matrix audio_embeddings;   // N x d
    std::vector<std::vector<std::int32_t>> labels;

    std::size_t size() const { return ids.size(); }
    std::size_t dim() const { return visual_embeddings.cols; }
};

// Runs every record through both branches. Throws on duplicate ids.
EmbeddingStore build_store(const JointModel& model, const Corpus& corpus);

struct ScoredId {
    std::string id;
    double score = 0.0;
};

struct RetrievalResult {
    std::string query_id;  // empty for raw-embedding queries
    Direction direction = Direction::AudioToVideo;
    std::vector<ScoredId> ranked;  // descending score, ties by ascending id
};

// Exact cosine ranking of a query embedding against the candidate modality.
// top_k == 0 returns the full ordering.
RetrievalResult rank(const EmbeddingStore& store, const Vec& query_embedding,
                     Direction direction, std::size_t top_k = 0);

// Ranks using the stored query-side embedding of `video_id`. With
// exclude_self the query's own id is removed from the candidates before
// truncation (the "take the second one in the ordered list" rule).
RetrievalResult query_cross_modal(const EmbeddingStore& store, const std::string& video_id,
                                  Direction direction, bool exclude_self,
                                  std::size_t top_k = 0);

// Fraction of all N queries whose own counterpart lands in the top k of the
// candidate modality. The counterpart is the retrieval target, so the query
// id is never excluded here.
double recall_at_k(const EmbeddingStore& store, std::size_t k, Direction direction);

// Index-selected sub-store (used for evaluation pools).
EmbeddingStore subset(const EmbeddingStore& store, std::span<const std::size_t> indices);

struct RecallRow {
    std::size_t pool_size = 0;
    Direction direction = Direction::AudioToVideo;
    std::vector<double> recalls;  // aligned with RecallTable::ks
};

struct RecallTable {
    std::vector<std::size_t> ks;
    std::vector<RecallRow> rows;
};

// Recall over seeded sample pools in both directions. Pools are prefixes of
// one seeded permutation of the store, so larger pools contain smaller ones.
RecallTable recall_table(const EmbeddingStore& store, std::span<const std::size_t> pool_sizes,
                         std::span<const std::size_t> ks, std::uint64_t seed);

// Fixed-width rendering of one direction's rows, matching the layout
// pool size x recall@k.
std::string format_recall_table(const RecallTable& table, Direction direction);

// Delimited form: direction,pool_size,k,recall per line.
std::string recall_table_csv(const RecallTable& table);

}  // namespace crossmodal
