// Times the OpenMP kernels against the serial reference on the shapes the
// training and retrieval paths actually hit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "crossmodal/kernels.hpp"
#include "crossmodal/numerics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace crossmodal;
using Clock = std::chrono::steady_clock;

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_normal();
    return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto start = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serial code\n");
#endif
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    Rng rng(1);

    {
        // widest training layer: 2000 x 2000
        const std::size_t rows = 2000;
        const std::size_t cols = 2000;
        const auto w = random_values(rows * cols, rng);
        const auto x = random_values(cols, rng);
        std::vector<double> out(rows);
        report("matvec 2000x2000",
               time_ms([&] { kernels::serial::matvec(out.data(), w.data(), rows, cols,
                                                     x.data()); }, 20),
               time_ms([&] { kernels::matvec(out.data(), w.data(), rows, cols, x.data()); },
                       20));

        std::vector<double> out_t(cols);
        const auto dy = random_values(rows, rng);
        report("matvec_transposed 2000x2000",
               time_ms([&] { kernels::serial::matvec_transposed(out_t.data(), w.data(), rows,
                                                                cols, dy.data()); }, 20),
               time_ms([&] { kernels::matvec_transposed(out_t.data(), w.data(), rows, cols,
                                                        dy.data()); }, 20));

        auto grad = random_values(rows * cols, rng);
        report("add_outer 2000x2000",
               time_ms([&] { kernels::serial::add_outer_product(grad.data(), rows, cols,
                                                                dy.data(), x.data(), 0.5); },
                       20),
               time_ms([&] { kernels::add_outer_product(grad.data(), rows, cols, dy.data(),
                                                        x.data(), 0.5); }, 20));
    }

    {
        // retrieval scoring over a 6000-video store at embedding dim 250
        const std::size_t n = 6000;
        const std::size_t dim = 250;
        const auto store = random_values(n * dim, rng);
        const auto query = random_values(dim, rng);
        double qsq = 0.0;
        for (const double q : query) qsq += q * q;
        std::vector<double> scores(n);
        report("cosine_scores 6000x250",
               time_ms([&] { kernels::serial::cosine_scores(scores.data(), store.data(), n, dim,
                                                            query.data(), std::sqrt(qsq)); },
                       50),
               time_ms([&] { kernels::cosine_scores(scores.data(), store.data(), n, dim,
                                                    query.data(), std::sqrt(qsq)); }, 50));
    }

    return 0;
}
