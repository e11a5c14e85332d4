#pragma once

#include <cstddef>

// Hot inner loops, written twice: `kernels::` is the OpenMP-parallel set the
// library runs on, `kernels::serial::` is the plain reference implementation
// kept for testing and benchmarking. Both variants call the same scalar
// primitives per output element, and parallelism is only ever over
// independent outputs, so the two produce bit-identical results for any
// thread count.
namespace crossmodal::kernels {

// out[r] = sum_c w[r*cols + c] * x[c]
void matvec(double* out, const double* w, std::size_t rows, std::size_t cols, const double* x);

// out[c] = sum_r w[r*cols + c] * dy[r]   (i.e. out = W^T * dy)
void matvec_transposed(double* out, const double* w, std::size_t rows, std::size_t cols,
                       const double* dy);

// g[r*cols + c] += scale * dy[r] * x[c]
void add_outer_product(double* g, std::size_t rows, std::size_t cols, const double* dy,
                       const double* x, double scale);

// scores[n] = cosine(rows[n], query); zero-norm rows or query score 0.
// `query_norm` is ||query|| precomputed by the caller.
void cosine_scores(double* scores, const double* rows, std::size_t n, std::size_t dim,
                   const double* query, double query_norm);

namespace serial {

void matvec(double* out, const double* w, std::size_t rows, std::size_t cols, const double* x);
void matvec_transposed(double* out, const double* w, std::size_t rows, std::size_t cols,
                       const double* dy);
void add_outer_product(double* g, std::size_t rows, std::size_t cols, const double* dy,
                       const double* x, double scale);
void cosine_scores(double* scores, const double* rows, std::size_t n, std::size_t dim,
                   const double* query, double query_norm);

}  // namespace serial

}  // namespace crossmodal::kernels
