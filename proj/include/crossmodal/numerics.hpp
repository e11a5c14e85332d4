#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace crossmodal {

using Vec = std::vector<double>;

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
    double* row_ptr(std::size_t r) { return data.data() + r * cols; }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

// Deterministic counter-based generator (splitmix64 core). The same seed
// always yields the same draw sequence, and independent streams are obtained
// with derive()/split() rather than by sharing one instance across workers.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double next_double();
    // Standard normal, Box-Muller with a cached spare.
    double next_normal();
    // Uniform integer in [0, bound); bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    // Independent child stream; also advances this stream by one draw.
    Rng split() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

    // Stateless derivation of an independent stream from (seed, stream id).
    // Used wherever a random sequence must be reconstructible by index.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates permutation of {0, ..., n-1}.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);

// Standard matrix-vector product; throws DimensionError on mismatch.
Vec matvec(const Matrix& m, const Vec& v);

// Elementwise max(0, x).
Vec relu(const Vec& v);

// Max-subtracted softmax; outputs are nonnegative and sum to 1.
Vec softmax(const Vec& v);

// log(softmax(v)) evaluated without forming intermediate exponentials of
// large magnitude.
Vec log_softmax(const Vec& v);

// Cosine similarity per the usual sum formula, clamped to [-1, 1]. A
// zero-norm input yields 0 and sets *degenerate when provided.
double cosine_similarity(const Vec& x, const Vec& z, bool* degenerate = nullptr);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

}  // namespace crossmodal
