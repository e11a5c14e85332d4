#include "crossmodal/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "crossmodal/errors.hpp"
#include "crossmodal/kernels.hpp"

namespace crossmodal {

namespace {

const Matrix& candidate_matrix(const EmbeddingStore& store, Direction direction) {
    return direction == Direction::AudioToVideo ? store.visual_embeddings
                                                : store.audio_embeddings;
}

const Matrix& query_matrix(const EmbeddingStore& store, Direction direction) {
    return direction == Direction::AudioToVideo ? store.audio_embeddings
                                                : store.visual_embeddings;
}

Vec score_all(const EmbeddingStore& store, const Vec& query, Direction direction) {
    if (store.size() == 0) throw DimensionError("rank: empty store");
    if (query.size() != store.dim()) {
        throw DimensionError("rank: query length " + std::to_string(query.size()) +
                             " does not match store dim " + std::to_string(store.dim()));
    }
    const Matrix& candidates = candidate_matrix(store, direction);
    Vec scores(store.size());
    kernels::cosine_scores(scores.data(), candidates.data.data(), store.size(), store.dim(),
                           query.data(), norm(query));
    return scores;
}

}  // namespace

const char* direction_name(Direction direction) {
    return direction == Direction::AudioToVideo ? "audio-to-video" : "video-to-audio";
}

EmbeddingStore build_store(const JointModel& model, const Corpus& corpus) {
    EmbeddingStore store;
    const std::size_t n = corpus.size();
    const std::size_t d = model.embedding_dim();
    store.ids.resize(n);
    store.labels.resize(n);
    store.visual_embeddings = Matrix(n, d);
    store.audio_embeddings = Matrix(n, d);

    std::unordered_set<std::string> seen;
    for (const FeatureRecord& record : corpus) {
        if (!seen.insert(record.id).second) {
            throw FormatError(FormatError::Kind::DuplicateId,
                              "build_store: duplicate id '" + record.id + "'");
        }
    }

    // Rows are independent; embeddings land in preallocated slots, so the
    // result does not depend on the thread count.
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            const auto idx = static_cast<std::size_t>(i);
            const Vec visual = forward_branch(model.visual, corpus[idx].visual).embedding;
            const Vec audio = forward_branch(model.audio, corpus[idx].audio).embedding;
            std::copy(visual.begin(), visual.end(), store.visual_embeddings.row_ptr(idx));
            std::copy(audio.begin(), audio.end(), store.audio_embeddings.row_ptr(idx));
        } catch (...) {
#pragma omp critical
            {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t i = 0; i < n; ++i) {
        store.ids[i] = corpus[i].id;
        store.labels[i] = corpus[i].labels;
    }
    return store;
}

RetrievalResult rank(const EmbeddingStore& store, const Vec& query_embedding,
                     Direction direction, std::size_t top_k) {
    const Vec scores = score_all(store, query_embedding, direction);

    std::vector<std::size_t> order(store.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return store.ids[a] < store.ids[b];
    });

    RetrievalResult result;
    result.direction = direction;
    const std::size_t n = (top_k == 0) ? order.size() : std::min(top_k, order.size());
    result.ranked.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        result.ranked.push_back({store.ids[order[i]], scores[order[i]]});
    }
    return result;
}

RetrievalResult query_cross_modal(const EmbeddingStore& store, const std::string& video_id,
                                  Direction direction, bool exclude_self, std::size_t top_k) {
    const auto it = std::find(store.ids.begin(), store.ids.end(), video_id);
    if (it == store.ids.end()) {
        throw DimensionError("query_cross_modal: unknown id '" + video_id + "'");
    }
    const std::size_t index = static_cast<std::size_t>(it - store.ids.begin());
    const Matrix& queries = query_matrix(store, direction);
    Vec query(queries.row_ptr(index), queries.row_ptr(index) + queries.cols);

    RetrievalResult result = rank(store, query, direction, 0);
    result.query_id = video_id;
    if (exclude_self) {
        std::erase_if(result.ranked,
                      [&video_id](const ScoredId& s) { return s.id == video_id; });
    }
    if (top_k != 0 && result.ranked.size() > top_k) result.ranked.resize(top_k);
    return result;
}

double recall_at_k(const EmbeddingStore& store, std::size_t k, Direction direction) {
    const std::size_t n = store.size();
    if (k == 0 || k > n) {
        throw DimensionError("recall_at_k: k = " + std::to_string(k) +
                             " outside [1, " + std::to_string(n) + "]");
    }
    const Matrix& queries = query_matrix(store, direction);
    const Matrix& candidates = candidate_matrix(store, direction);
    const std::size_t d = store.dim();

    std::size_t hits = 0;
    // The counterpart ranks 1 + the number of candidates that beat it under
    // the (score desc, id asc) order; queries are independent and the hit
    // count is an integer reduction, so the result is thread-count agnostic.
#pragma omp parallel for schedule(static) reduction(+ : hits)
    for (std::ptrdiff_t qi = 0; qi < static_cast<std::ptrdiff_t>(n); ++qi) {
        const auto q = static_cast<std::size_t>(qi);
        const double* query = queries.row_ptr(q);
        double query_sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) query_sq += query[i] * query[i];
        Vec scores(n);
        kernels::serial::cosine_scores(scores.data(), candidates.data.data(), n, d, query,
                                       std::sqrt(query_sq));
        const double target_score = scores[q];
        std::size_t beaten_by = 0;
        for (std::size_t j = 0; j < n && beaten_by < k; ++j) {
            if (j == q) continue;
            if (scores[j] > target_score ||
                (scores[j] == target_score && store.ids[j] < store.ids[q])) {
                ++beaten_by;
            }
        }
        if (beaten_by < k) hits += 1;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

EmbeddingStore subset(const EmbeddingStore& store, std::span<const std::size_t> indices) {
    EmbeddingStore out;
    const std::size_t d = store.dim();
    out.visual_embeddings = Matrix(indices.size(), d);
    out.audio_embeddings = Matrix(indices.size(), d);
    out.ids.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= store.size()) throw DimensionError("subset: index out of range");
        out.ids.push_back(store.ids[src]);
        out.labels.push_back(store.labels[src]);
        std::copy(store.visual_embeddings.row_ptr(src), store.visual_embeddings.row_ptr(src) + d,
                  out.visual_embeddings.row_ptr(i));
        std::copy(store.audio_embeddings.row_ptr(src), store.audio_embeddings.row_ptr(src) + d,
                  out.audio_embeddings.row_ptr(i));
    }
    return out;
}

RecallTable recall_table(const EmbeddingStore& store, std::span<const std::size_t> pool_sizes,
                         std::span<const std::size_t> ks, std::uint64_t seed) {
    RecallTable table;
    table.ks.assign(ks.begin(), ks.end());

    Rng rng = Rng::derive(seed, 0x706f6f6cull);  // "pool"
    const std::vector<std::size_t> perm = random_permutation(store.size(), rng);

    for (const std::size_t pool_size : pool_sizes) {
        if (pool_size > store.size()) {
            throw DimensionError("recall_table: pool size " + std::to_string(pool_size) +
                                 " exceeds store size " + std::to_string(store.size()));
        }
        const EmbeddingStore pool =
            subset(store, std::span<const std::size_t>(perm.data(), pool_size));
        for (const Direction direction : {Direction::AudioToVideo, Direction::VideoToAudio}) {
            RecallRow row;
            row.pool_size = pool_size;
            row.direction = direction;
            for (const std::size_t k : ks) row.recalls.push_back(recall_at_k(pool, k, direction));
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

std::string format_recall_table(const RecallTable& table, Direction direction) {
    std::ostringstream out;
    out << "Recall from " << (direction == Direction::AudioToVideo ? "audio to video"
                                                                   : "video to audio")
        << '\n';
    out << std::left << std::setw(20) << "Number of elements";
    for (const std::size_t k : table.ks) out << std::setw(12) << ("Recall@" + std::to_string(k));
    out << '\n';
    for (const RecallRow& row : table.rows) {
        if (row.direction != direction) continue;
        out << std::left << std::setw(20) << row.pool_size;
        for (const double r : row.recalls) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(1) << (100.0 * r) << '%';
            out << std::setw(12) << cell.str();
        }
        out << '\n';
    }
    return out.str();
}

std::string recall_table_csv(const RecallTable& table) {
    std::ostringstream out;
    out << "direction,pool_size,k,recall\n";
    out.precision(10);
    for (const RecallRow& row : table.rows) {
        for (std::size_t i = 0; i < table.ks.size(); ++i) {
            out << direction_name(row.direction) << ',' << row.pool_size << ',' << table.ks[i]
                << ',' << row.recalls[i] << '\n';
        }
    }
    return out.str();
}

}  // namespace crossmodal
