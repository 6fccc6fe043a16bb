#pragma once

#include "sfda/mathcore.hpp"
#include "sfda/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

namespace sfda::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    }
    return m;
}

/// Rows drawn from a flat Dirichlet, i.e. normalized exponentials.
inline Matrix random_probs(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = -std::log(rng.uniform_open());
            s += m(i, j);
        }
        m.row(i) /= s;
    }
    return m;
}

inline Matrix one_hot(const std::vector<int>& labels, Eigen::Index classes) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return m;
}

/// Entry-wise |a - b| / max(|a|, |b|), with a floor on the denominator so
/// entries that are zero up to rounding do not dominate.
inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double den = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / den);
        }
    }
    return worst;
}

inline double max_rel_error(const Vector& a, const Vector& b, double floor = 1e-8) {
    return max_rel_error(Matrix(a.transpose()), Matrix(b.transpose()), floor);
}

/// Central differences of f over every entry of `p`, step h.
template <class M, class F>
M central_diff(M& p, F&& f, double h = 1e-6) {
    M g(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            const double saved = p(i, j);
            p(i, j) = saved + h;
            const double hi = p(i, j);
            const auto up = f();
            p(i, j) = saved - h;
            const double lo = p(i, j);
            const auto down = f();
            p(i, j) = saved;
            // Divide by the step actually taken after rounding of saved +/- h.
            g(i, j) = static_cast<double>((up - down) / (hi - lo));
        }
    }
    return g;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sfda_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace sfda::test
