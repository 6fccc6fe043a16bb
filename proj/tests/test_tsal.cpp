#include "doctest.h"
#include "support.hpp"
#include "tsal_oracle.hpp"

#include "sfda/errors.hpp"
#include "sfda/tsal.hpp"

#include <cmath>
#include <numeric>

using namespace sfda;

namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t c) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(c));
    return y;
}

} // namespace

TEST_CASE("schedule endpoints and midpoint") {
    TsalConfig cfg;
    CHECK(tau_dis(0, cfg) == 1.0);
    CHECK(tau_dis(14, cfg) == 1.5);
    CHECK(tau_div(0, cfg) == 0.5);
    CHECK(tau_div(14, cfg) == 1.0);
    CHECK(tau_dis(7, cfg) == 1.25);
    CHECK(tau_div(7, cfg) == 0.75);
    CHECK_THROWS_AS(tau_dis(15, cfg), InvalidArgument);
    cfg.epochs = 1;
    CHECK(tau_dis(0, cfg) == 1.0);
    CHECK(tau_div(0, cfg) == 0.5);
    for (std::size_t e : {2u, 3u, 7u, 40u}) {
        cfg.epochs = e;
        CHECK(tau_dis(e - 1, cfg) == 1.5);
        CHECK(tau_div(e - 1, cfg) == 1.0);
        for (std::size_t t = 0; t + 1 < e; ++t) CHECK(tau_dis(t + 1, cfg) > tau_dis(t, cfg));
    }
}

TEST_CASE("config validation") {
    TsalConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.smoothing = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.tau_div_start = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("label smoothing") {
    std::vector<double> oh(10, 0.0);
    oh[0] = 1.0;
    const auto s = smooth_labels(oh, 0.1);
    CHECK(s[0] == doctest::Approx(0.91).epsilon(1e-15));
    for (std::size_t k = 1; k < 10; ++k) CHECK(s[k] == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0) < 1e-15);
    CHECK(*std::min_element(s.begin(), s.end()) == 0.1 / 10.0);
    CHECK(smooth_labels(oh, 0.0) == oh);

    const std::vector<double> soft{0.5, 0.5};
    const std::vector<double> two{1.0, 1.0};
    CHECK_THROWS_AS(smooth_labels(soft, 0.1), InvalidArgument);
    CHECK_THROWS_AS(smooth_labels(two, 0.1), InvalidArgument);

    const Matrix m = smoothed_label_matrix({0, 2}, 3, 0.3);
    CHECK(m(0, 0) == doctest::Approx(0.8));
    CHECK(m(1, 2) == doctest::Approx(0.8));
    CHECK(m(1, 0) == doctest::Approx(0.1));
}

TEST_CASE("target distribution") {
    TsalConfig cfg;
    const std::vector<double> l{0.0, 0.0};
    const std::vector<double> y{0.95, 0.05};
    const auto q = target_distribution(l, y, 0, cfg);
    CHECK(std::abs(q[0] - 0.785) < 1e-15);
    CHECK(std::abs(q[1] - 0.515) < 1e-15);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(30);
        std::vector<double> logits(c);
        for (auto& v : logits) v = 3.0 * rng.normal();
        std::vector<double> oh(c, 0.0);
        oh[rng.uniform_index(c)] = 1.0;
        const auto ys = smooth_labels(oh, cfg.smoothing);
        for (std::size_t t : {0u, 7u, 14u}) {
            const auto qq = target_distribution(logits, ys, t, cfg);
            CHECK(std::abs(std::accumulate(qq.begin(), qq.end(), 0.0) - 1.3) < 1e-12);
        }
    }

    cfg.alpha = 0.0;
    const std::vector<double> l3{1.0, -2.0, 0.5};
    const std::vector<double> y3{0.0, 1.0, 0.0};
    CHECK(target_distribution(l3, y3, 14, cfg) == softmax(l3, 1.5));
}

TEST_CASE("uniform logits hit the diversity floor") {
    TsalConfig cfg;
    const Matrix logits = Matrix::Zero(8, 31);
    Matrix oh = Matrix::Zero(8, 31);
    for (int i = 0; i < 8; ++i) oh(i, i) = 1.0;
    for (std::size_t t : {0u, 14u}) {
        const auto r = tsal_batch(logits, oh, t, cfg);
        for (double v : r.p_bar) CHECK(std::abs(v - 1.0 / 31.0) < 1e-15);
        CHECK(std::abs(r.div + std::log(31.0)) <= 1e-9);
        CHECK(r.div == doctest::Approx(-3.434).epsilon(1e-3));
    }
}

TEST_CASE("alpha zero reduces dis to mean prediction entropy") {
    TsalConfig cfg;
    cfg.alpha = 0.0;
    Rng rng(4);
    const Matrix logits = test::random_matrix(rng, 6, 4, 2.0);
    const Matrix oh = test::one_hot(random_labels(rng, 6, 4), 4);
    const auto r = tsal_batch(logits, oh, 0, cfg);
    double h = 0.0;
    for (Eigen::Index i = 0; i < 6; ++i) h += entropy(softmax(row_span(logits, i)));
    CHECK(std::abs(r.dis - h / 6.0) < 1e-12);
}

TEST_CASE("loss decomposition and bounds") {
    TsalConfig cfg;
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = static_cast<Eigen::Index>(2 + rng.uniform_index(20));
        const auto c = static_cast<Eigen::Index>(2 + rng.uniform_index(30));
        const Matrix logits = test::random_matrix(rng, b, c, 4.0);
        const Matrix oh = test::one_hot(random_labels(rng, static_cast<std::size_t>(b), static_cast<std::size_t>(c)), c);
        const auto r = tsal_batch(logits, oh, rng.uniform_index(15), cfg);
        CHECK(r.loss == r.dis + r.div);
        CHECK(r.div >= -std::log(static_cast<double>(c)) - 1e-12);
        CHECK(r.div <= 0.0);
        CHECK(r.div > -std::log(static_cast<double>(c)));
    }
}

TEST_CASE("dis grows with alpha") {
    Rng rng(6);
    TsalConfig cfg;
    const Matrix logits = test::random_matrix(rng, 8, 5, 2.0);
    const Matrix oh = test::one_hot(random_labels(rng, 8, 5), 5);
    double prev = -1.0;
    for (double a : {0.0, 0.1, 0.3, 1.0, 3.0}) {
        cfg.alpha = a;
        const double dis = tsal_batch(logits, oh, 3, cfg).dis;
        CHECK(dis >= prev);
        prev = dis;
    }
    // The slope in alpha is the mean cross-entropy of the smoothed labels.
    cfg.alpha = 0.0;
    const double d0 = tsal_batch(logits, oh, 3, cfg).dis;
    cfg.alpha = 1.0;
    const double d1 = tsal_batch(logits, oh, 3, cfg).dis;
    const Matrix ys = smoothed_label_matrix([&] {
        std::vector<int> y;
        for (Eigen::Index i = 0; i < 8; ++i) y.push_back(static_cast<int>(argmax(row_span(oh, i))));
        return y;
    }(), 5, cfg.smoothing);
    double slope = 0.0;
    for (Eigen::Index i = 0; i < 8; ++i) slope += cross_entropy(row_span(ys, i), softmax(row_span(logits, i)));
    CHECK(std::abs((d1 - d0) - slope / 8.0) < 1e-12);
}

TEST_CASE("raising tau_div softens the batch average") {
    Rng rng(7);
    TsalConfig cfg;
    cfg.epochs = 2;
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix logits = test::random_matrix(rng, 8, 6, 2.0);
        const Matrix oh = test::one_hot(random_labels(rng, 8, 6), 6);
        cfg.tau_div_start = 0.5;
        cfg.tau_div_end = 0.5 + 0.1 + rng.uniform();
        const double lo = entropy(tsal_batch(logits, oh, 0, cfg).p_bar);
        const double hi = entropy(tsal_batch(logits, oh, 1, cfg).p_bar);
        CHECK(hi > lo);
    }
}

TEST_CASE("tsal gradient matches finite differences with the target frozen") {
    Rng rng(8);
    TsalConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = trial % 2 == 0 ? 0 : cfg.epochs - 1;
        Matrix logits = test::random_matrix(rng, 8, 5, 2.0);
        const auto y = random_labels(rng, 8, 5);
        const auto r = tsal_batch(logits, test::one_hot(y, 5), t, cfg);
        const test::TsalOracle oracle{cfg.alpha, tau_dis(t, cfg), tau_div(t, cfg)};
        const Matrix ys = smoothed_label_matrix(y, 5, cfg.smoothing);
        const auto q = oracle.targets(logits, ys);
        CHECK(std::abs(oracle.loss_frozen(logits, q) - r.loss) < 1e-12);
        const Matrix fd = test::central_diff(logits, [&] { return oracle.loss_frozen(logits, q); });
        CHECK(test::max_rel_error(r.dloss_dlogits, fd) <= 1e-5);
    }
}

TEST_CASE("full-flow gradient matches finite differences") {
    Rng rng(9);
    TsalConfig cfg;
    cfg.detach_target = false;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t t = rng.uniform_index(cfg.epochs);
        const auto c = static_cast<Eigen::Index>(2 + rng.uniform_index(8));
        Matrix logits = test::random_matrix(rng, 6, c, 2.0);
        const auto y = random_labels(rng, 6, static_cast<std::size_t>(c));
        const auto r = tsal_batch(logits, test::one_hot(y, c), t, cfg);
        const test::TsalOracle oracle{cfg.alpha, tau_dis(t, cfg), tau_div(t, cfg)};
        const Matrix ys = smoothed_label_matrix(y, static_cast<std::size_t>(c), cfg.smoothing);
        const Matrix fd = test::central_diff(logits, [&] { return oracle.loss_full(logits, ys); });
        CHECK(test::max_rel_error(r.dloss_dlogits, fd) <= 1e-5);
    }
}

TEST_CASE("tsal_batch input errors") {
    TsalConfig cfg;
    const Matrix one = Matrix::Zero(1, 3);
    Matrix oh1 = Matrix::Zero(1, 3);
    oh1(0, 0) = 1.0;
    CHECK_THROWS_AS(tsal_batch(one, oh1, 0, cfg), InvalidArgument);
    const Matrix two = Matrix::Zero(2, 3);
    Matrix soft = Matrix::Constant(2, 3, 1.0 / 3.0);
    CHECK_THROWS_AS(tsal_batch(two, soft, 0, cfg), InvalidArgument);
    CHECK_THROWS_AS(tsal_batch(two, Matrix::Zero(2, 2), 0, cfg), InvalidArgument);
    CHECK_NOTHROW(tsal_batch_soft(two, soft, 0, cfg));
}

TEST_CASE("mixup") {
    Rng rng(10);
    const Matrix x = test::random_matrix(rng, 6, 4);
    const Matrix y = test::one_hot({0, 1, 2, 0, 1, 2}, 3);
    const std::vector<std::size_t> perm{1, 2, 0, 4, 5, 3};

    const auto id = mixup_with(x, y, 1.0, perm);
    CHECK(id.features == x);
    CHECK(id.targets == y);

    const auto half = mixup_with(x, y, 0.5, perm);
    CHECK(half.targets(0, 0) == 0.5);
    CHECK(half.targets(0, 1) == 0.5);
    CHECK(half.targets(0, 2) == 0.0);

    Rng a(77), b(77);
    const auto ma = mixup(x, y, 0.3, 0.3, a);
    const auto mb = mixup(x, y, 0.3, 0.3, b);
    CHECK(ma.features == mb.features);
    CHECK(ma.lambda == mb.lambda);
    CHECK(ma.partner == mb.partner);

    for (int trial = 0; trial < 50; ++trial) {
        const auto m = mixup(x, y, 0.3, 0.3, rng);
        CHECK(m.lambda >= 0.0);
        CHECK(m.lambda <= 1.0);
        for (Eigen::Index i = 0; i < 6; ++i) {
            CHECK(std::abs(m.targets.row(i).sum() - 1.0) < 1e-12);
            const auto j = static_cast<Eigen::Index>(m.partner[static_cast<std::size_t>(i)]);
            // Row i sits on the segment from x[i] to x[partner]: mix - x[j] = lambda (x[i] - x[j]).
            const Eigen::RowVectorXd expect = m.lambda * (x.row(i) - x.row(j));
            CHECK((m.features.row(i) - x.row(j) - expect).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    CHECK_THROWS_AS(mixup(x.topRows(1), y.topRows(1), 0.3, 0.3, rng), InvalidArgument);
}
