#pragma once

#include "sfda/types.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfda {

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// Seeded random numbers
// ---------------------------------------------------------------------------

/// Mixes a seed with a stage tag so that independent stages get independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Deterministic generator. The engine is mt19937_64, whose output sequence is
/// fixed by the standard; all derived distributions are implemented here rather
/// than through <random> distributions, which are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform on (0, 1).
    double uniform_open();
    /// Unbiased integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller; pairs are cached.
    double normal();
    /// Gamma(shape, scale = 1), Marsaglia-Tsang with the shape < 1 boost.
    double gamma(double shape);
    /// Beta(a, b) from the ratio of two Gamma draws.
    double beta(double a, double b);

    /// Fisher-Yates shuffle driven by uniform_index.
    void shuffle(std::span<std::size_t> items);
    std::vector<std::size_t> permutation(std::size_t n);

    /// A new generator seeded with derive_seed(seed(), tag).
    Rng fork(std::string_view tag) const { return Rng(derive_seed(seed_, tag)); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// ---------------------------------------------------------------------------
// Probability primitives
// ---------------------------------------------------------------------------

/// softmax(logits / temperature), computed with max subtraction.
/// Throws InvalidArgument on empty input, non-finite logits or temperature <= 0.
ProbVector softmax(std::span<const double> logits, double temperature = 1.0);

/// Row-wise softmax of a B x C logit matrix.
Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);

/// Shannon entropy in nats, 0 ln 0 := 0.
/// Rejects entries outside [0, 1] or a sum deviating from one by more than 1e-6.
double entropy(std::span<const double> p);

/// -sum target_c ln max(p_c, 1e-12). The target need not be normalized.
double cross_entropy(std::span<const double> target, std::span<const double> p);

/// Indices of the K largest values, descending; equal values ordered by index.
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

/// Each row divided by its Euclidean norm; rows with norm below 1e-12 are left as is.
Matrix l2_normalize_rows(const Matrix& x);

/// Shortest decimal text that round-trips to the same double; integral values
/// keep a trailing ".0" (1 -> "1.0"). Non-finite values print as "nan"/"inf".
std::string format_real(double v);

/// Span over row i of a row-major matrix.
inline std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

} // namespace sfda
