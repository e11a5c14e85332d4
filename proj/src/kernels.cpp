#include "crossmodal/kernels.hpp"

#include <cmath>

namespace crossmodal::kernels {

namespace {

// Shared scalar primitives. noinline so the parallel and serial variants run
// the exact same machine code per output element; left-to-right accumulation
// keeps rounding independent of the caller.
__attribute__((noinline)) double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

__attribute__((noinline)) double dot_strided(const double* a, std::size_t stride, const double* b,
                                             std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i * stride] * b[i];
    return acc;
}

__attribute__((noinline)) void axpy(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

__attribute__((noinline)) double cosine_against_row(const double* row, std::size_t dim,
                                                    const double* query, double query_norm) {
    const double d = dot(row, query, dim);
    const double row_norm = std::sqrt(dot(row, row, dim));
    const double denom = row_norm * query_norm;
    if (denom == 0.0) return 0.0;
    double s = d / denom;
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelCutoff = 64 * 1024;

}  // namespace

void matvec(double* out, const double* w, std::size_t rows, std::size_t cols, const double* x) {
    const std::ptrdiff_t r_end = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelCutoff)
    for (std::ptrdiff_t r = 0; r < r_end; ++r) {
        out[r] = dot(w + static_cast<std::size_t>(r) * cols, x, cols);
    }
}

void matvec_transposed(double* out, const double* w, std::size_t rows, std::size_t cols,
                       const double* dy) {
    const std::ptrdiff_t c_end = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelCutoff)
    for (std::ptrdiff_t c = 0; c < c_end; ++c) {
        out[c] = dot_strided(w + c, cols, dy, rows);
    }
}

void add_outer_product(double* g, std::size_t rows, std::size_t cols, const double* dy,
                       const double* x, double scale) {
    const std::ptrdiff_t r_end = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelCutoff)
    for (std::ptrdiff_t r = 0; r < r_end; ++r) {
        axpy(g + static_cast<std::size_t>(r) * cols, scale * dy[r], x, cols);
    }
}

void cosine_scores(double* scores, const double* rows, std::size_t n, std::size_t dim,
                   const double* query, double query_norm) {
    const std::ptrdiff_t n_end = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * dim >= kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < n_end; ++i) {
        scores[i] = cosine_against_row(rows + static_cast<std::size_t>(i) * dim, dim, query,
                                       query_norm);
    }
}

namespace serial {

void matvec(double* out, const double* w, std::size_t rows, std::size_t cols, const double* x) {
    for (std::size_t r = 0; r < rows; ++r) out[r] = dot(w + r * cols, x, cols);
}

void matvec_transposed(double* out, const double* w, std::size_t rows, std::size_t cols,
                       const double* dy) {
    for (std::size_t c = 0; c < cols; ++c) out[c] = dot_strided(w + c, cols, dy, rows);
}

void add_outer_product(double* g, std::size_t rows, std::size_t cols, const double* dy,
                       const double* x, double scale) {
    for (std::size_t r = 0; r < rows; ++r) axpy(g + r * cols, scale * dy[r], x, cols);
}

void cosine_scores(double* scores, const double* rows, std::size_t n, std::size_t dim,
                   const double* query, double query_norm) {
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = cosine_against_row(rows + i * dim, dim, query, query_norm);
    }
}

}  // namespace serial

}  // namespace crossmodal::kernels
