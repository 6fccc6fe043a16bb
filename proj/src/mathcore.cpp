#include "sfda/mathcore.hpp"

#include "sfda/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace sfda {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    return splitmix64(seed ^ fnv1a(tag));
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    double u = 0.0;
    while (u == 0.0) {
        u = uniform();
    }
    return u;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw InvalidArgument("uniform_index: n must be positive");
    }
    // Rejection sampling on the largest multiple of n below 2^64.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
        throw InvalidArgument("gamma: shape must be positive and finite");
    }
    if (shape < 1.0) {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        const double g = gamma(shape + 1.0);
        return g * std::pow(uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double Rng::beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    if (x + y == 0.0) {
        // Both draws underflowed; only reachable for tiny shapes.
        return uniform() < a / (a + b) ? 1.0 : 0.0;
    }
    return x / (x + y);
}

void Rng::shuffle(std::span<std::size_t> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(i));
        std::swap(items[i - 1], items[j]);
    }
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
}

ProbVector softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) {
        throw InvalidArgument("softmax: empty logit vector");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("softmax: temperature must be positive and finite");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double l : logits) {
        if (!std::isfinite(l)) {
            throw InvalidArgument("softmax: non-finite logit");
        }
        max_logit = std::max(max_logit, l);
    }
    ProbVector out(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp((logits[c] - max_logit) / temperature);
        total += out[c];
    }
    for (double& v : out) {
        v /= total;
    }
    return out;
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const ProbVector p = softmax(row_span(logits, i), temperature);
        std::copy(p.begin(), p.end(), out.data() + i * out.cols());
    }
    return out;
}

double entropy(std::span<const double> p) {
    if (p.empty()) {
        throw InvalidArgument("entropy: empty probability vector");
    }
    double sum = 0.0;
    double h = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvalidArgument("entropy: entry outside [0, 1]");
        }
        sum += v;
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw InvalidArgument("entropy: probabilities do not sum to one");
    }
    return h;
}

double cross_entropy(std::span<const double> target, std::span<const double> p) {
    if (target.size() != p.size()) {
        throw InvalidArgument("cross_entropy: dimension mismatch");
    }
    double h = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (target[c] != 0.0) {
            h -= target[c] * std::log(std::max(p[c], kProbFloor));
        }
    }
    return h;
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
    if (k == 0 || k > values.size()) {
        throw InvalidArgument("topk_indices: K must satisfy 1 <= K <= N");
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (values[a] != values[b]) {
                              return values[a] > values[b];
                          }
                          return a < b;
                      });
    idx.resize(k);
    return idx;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) {
        throw InvalidArgument("argmax: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eE") == std::string::npos) {
        s += ".0";
    }
    return s;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n >= 1e-12) {
            out.row(i) /= n;
        }
    }
    return out;
}

} // namespace sfda
