#include "crossmodal/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crossmodal/errors.hpp"
#include "crossmodal/kernels.hpp"

namespace crossmodal {

std::uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014); public-domain reference constants.
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], keeps the log finite
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
    if (bound == 0) throw DimensionError("Rng::next_below: bound must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    // Run the stream id through one splitmix round keyed by the seed so that
    // consecutive ids yield unrelated states.
    Rng mixer(seed ^ (stream * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    return Rng(mixer.next_u64());
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const Vec& v) {
    return std::sqrt(dot(v, v));
}

Vec matvec(const Matrix& m, const Vec& v) {
    if (m.cols != v.size()) {
        throw DimensionError("matvec: matrix has " + std::to_string(m.cols) +
                             " columns but vector has length " + std::to_string(v.size()));
    }
    Vec out(m.rows);
    kernels::matvec(out.data(), m.data.data(), m.rows, m.cols, v.data());
    return out;
}

Vec relu(const Vec& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    return out;
}

Vec softmax(const Vec& v) {
    if (v.empty()) throw DimensionError("softmax: empty input");
    const double max = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - max);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Vec log_softmax(const Vec& v) {
    if (v.empty()) throw DimensionError("log_softmax: empty input");
    const double max = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (const double x : v) sum += std::exp(x - max);
    const double lse = max + std::log(sum);
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return out;
}

double cosine_similarity(const Vec& x, const Vec& z, bool* degenerate) {
    if (x.size() != z.size()) throw DimensionError("cosine_similarity: length mismatch");
    const double nx = norm(x);
    const double nz = norm(z);
    if (nx == 0.0 || nz == 0.0) {
        if (degenerate != nullptr) *degenerate = true;
        return 0.0;
    }
    return std::clamp(dot(x, z) / (nx * nz), -1.0, 1.0);
}

bool all_finite(const Vec& v) {
    for (const double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(m.data);
}

}  // namespace crossmodal
