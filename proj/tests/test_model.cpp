#include "doctest.h"
#include "support.hpp"

#include "sfda/errors.hpp"
#include "sfda/model.hpp"

#include <cmath>
#include <cstring>

using namespace sfda;

namespace {

AdapterClassifier random_model(Rng& rng, std::size_t d, std::size_t h, std::size_t c, Activation act) {
    AdapterClassifier m = AdapterClassifier::create(d, h, c, act, rng);
    // Spread the parameters beyond the init range so tanh leaves its linear regime.
    m.adapter_weight = test::random_matrix(rng, m.adapter_weight.rows(), m.adapter_weight.cols());
    m.classifier_weight = test::random_matrix(rng, m.classifier_weight.rows(), m.classifier_weight.cols());
    for (Eigen::Index i = 0; i < m.adapter_bias.size(); ++i) m.adapter_bias(i) = rng.normal();
    for (Eigen::Index i = 0; i < m.classifier_bias.size(); ++i) m.classifier_bias(i) = rng.normal();
    return m;
}

/// Scalar probe 0.5 * |logits|^2 + <r, logits>; its gradient is logits + r.
double probe_loss(const AdapterClassifier& m, const Matrix& x, const Matrix& r) {
    const Matrix l = forward(m, x).logits;
    return 0.5 * l.squaredNorm() + (l.array() * r.array()).sum();
}

double fd_worst(AdapterClassifier& m, const Matrix& x, const Matrix& r) {
    const ForwardResult fr = forward(m, x);
    const Matrix upstream = fr.logits + r;
    const ParamGrads g = backward(m, fr.cache, upstream);
    auto f = [&] { return probe_loss(m, x, r); };
    double worst = 0.0;
    worst = std::max(worst, test::max_rel_error(g.adapter_weight, test::central_diff(m.adapter_weight, f)));
    worst = std::max(worst, test::max_rel_error(g.adapter_bias, test::central_diff(m.adapter_bias, f)));
    worst = std::max(worst,
                     test::max_rel_error(g.classifier_weight, test::central_diff(m.classifier_weight, f)));
    worst = std::max(worst, test::max_rel_error(g.classifier_bias, test::central_diff(m.classifier_bias, f)));
    return worst;
}

} // namespace

TEST_CASE("forward with zero parameters gives uniform predictions") {
    Rng rng(1);
    AdapterClassifier m = AdapterClassifier::create(4, 3, 5, Activation::Identity, rng);
    m.adapter_weight.setZero();
    m.adapter_bias.setZero();
    m.classifier_weight.setZero();
    m.classifier_bias.setZero();
    const Matrix x = test::random_matrix(rng, 6, 4);
    const ForwardResult fr = forward(m, x);
    CHECK(fr.logits.isZero(0.0));
    const Matrix p = softmax_rows(fr.logits);
    CHECK((p.array() == 0.2).all());
}

TEST_CASE("forward on a hand-computed 2x2 case") {
    AdapterClassifier m;
    m.adapter_weight = Matrix::Identity(2, 2);
    m.adapter_bias = Vector::Zero(2);
    m.classifier_weight.resize(2, 2);
    m.classifier_weight << 1, 2, 3, 4;
    m.classifier_bias.resize(2);
    m.classifier_bias << 0.5, -0.5;
    Matrix x(2, 2);
    x << 1, -1, 0.5, 2;
    const Matrix l = forward(m, x).logits;
    CHECK(l(0, 0) == -0.5);
    CHECK(l(0, 1) == -1.5);
    CHECK(l(1, 0) == 5.0);
    CHECK(l(1, 1) == 9.0);

    m.activation = Activation::Tanh;
    const ForwardResult t = forward(m, x);
    CHECK(t.features(0, 0) == doctest::Approx(std::tanh(1.0)));
    CHECK(t.logits(0, 0) == doctest::Approx(std::tanh(1.0) + 2 * std::tanh(-1.0) + 0.5));
}

TEST_CASE("batched forward equals row-wise forward") {
    Rng rng(2);
    for (auto act : {Activation::Identity, Activation::Tanh}) {
        const AdapterClassifier m = AdapterClassifier::create(32, 16, 10, act, rng);
        const Matrix x = test::random_matrix(rng, 64, 32);
        const Matrix l = forward(m, x).logits;
        for (Eigen::Index i = 0; i < 64; ++i) {
            const Matrix one = forward(m, x.row(i)).logits;
            CHECK((one.row(0) - l.row(i)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("backward with zero upstream is zero") {
    Rng rng(3);
    const AdapterClassifier m = random_model(rng, 5, 4, 3, Activation::Tanh);
    const Matrix x = test::random_matrix(rng, 6, 5);
    const ForwardResult fr = forward(m, x);
    const ParamGrads g = backward(m, fr.cache, Matrix::Zero(6, 3));
    CHECK(g.norm() == 0.0);
}

TEST_CASE("backward matches finite differences") {
    Rng rng(4);
    for (auto act : {Activation::Identity, Activation::Tanh}) {
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t d = 1 + rng.uniform_index(8);
            const std::size_t h = 1 + rng.uniform_index(4);
            const std::size_t c = 1 + rng.uniform_index(3);
            const auto b = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
            AdapterClassifier m = random_model(rng, d, h, c, act);
            const Matrix x = test::random_matrix(rng, b, static_cast<Eigen::Index>(d));
            const Matrix r = test::random_matrix(rng, b, static_cast<Eigen::Index>(c));
            CHECK(fd_worst(m, x, r) <= 1e-5);
        }
        AdapterClassifier m = random_model(rng, 6, 4, 3, act);
        CHECK(fd_worst(m, test::random_matrix(rng, 6, 6), test::random_matrix(rng, 6, 3)) <= 1e-5);
    }
}

TEST_CASE("frozen classifier gets a zero gradient block") {
    Rng rng(5);
    AdapterClassifier m = random_model(rng, 4, 3, 2, Activation::Identity);
    m.classifier_frozen = true;
    const Matrix x = test::random_matrix(rng, 5, 4);
    const ForwardResult fr = forward(m, x);
    const ParamGrads g = backward(m, fr.cache, test::random_matrix(rng, 5, 2));
    CHECK(g.classifier_weight.isZero(0.0));
    CHECK(g.classifier_bias.isZero(0.0));
    CHECK(g.adapter_weight.norm() > 0.0);
}

TEST_CASE("stale or mismatched cache is rejected") {
    Rng rng(6);
    AdapterClassifier m = random_model(rng, 4, 3, 2, Activation::Identity);
    const Matrix x = test::random_matrix(rng, 5, 4);
    const ForwardResult fr = forward(m, x);
    CHECK_THROWS_AS(backward(m, fr.cache, Matrix::Zero(4, 2)), ContractError);
    OptimState opt = OptimState::create(m, {}, 10);
    sgd_step(m, opt, ParamGrads::zeros_like(m));
    CHECK_THROWS_AS(backward(m, fr.cache, Matrix::Zero(5, 2)), ContractError);
}

TEST_CASE("lr schedule") {
    CHECK(lr_at(0, 100, 1e-3) == 1e-3);
    CHECK(std::abs(lr_at(100, 100, 1e-3) - 1e-3 * std::pow(11.0, -0.75)) < 1e-18);
    CHECK(lr_at(100, 100, 1e-3) == doctest::Approx(1.655e-4).epsilon(1e-3));
    for (std::size_t t = 0; t < 100; ++t) CHECK(lr_at(t + 1, 100, 1e-2) < lr_at(t, 100, 1e-2));
    CHECK_THROWS_AS(lr_at(101, 100, 1e-3), InvalidArgument);
}

TEST_CASE("sgd_step examples") {
    Rng rng(7);
    {
        AdapterClassifier m = random_model(rng, 3, 2, 2, Activation::Identity);
        const AdapterClassifier before = m;
        OptimConfig cfg;
        cfg.weight_decay = 0.0;
        OptimState opt = OptimState::create(m, cfg, 5);
        for (int i = 0; i < 5; ++i) sgd_step(m, opt, ParamGrads::zeros_like(m));
        CHECK(m.same_parameters(before));
        CHECK_THROWS_AS(sgd_step(m, opt, ParamGrads::zeros_like(m)), ContractError);
    }
    {
        AdapterClassifier m = AdapterClassifier::create(1, 1, 1, Activation::Identity, rng);
        m.adapter_weight(0, 0) = 1.0;
        OptimConfig cfg;
        cfg.lr0 = 0.1;
        cfg.weight_decay = 0.0;
        cfg.momentum = 0.0;
        cfg.use_schedule = false;
        OptimState opt = OptimState::create(m, cfg, 1);
        ParamGrads g = ParamGrads::zeros_like(m);
        g.adapter_weight(0, 0) = 1.0;
        sgd_step(m, opt, g);
        CHECK(m.adapter_weight(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
    }
    {
        AdapterClassifier m = random_model(rng, 4, 3, 2, Activation::Identity);
        OptimConfig cfg;
        cfg.weight_decay = 0.0;
        OptimState opt = OptimState::create(m, cfg, 1);
        ParamGrads g = ParamGrads::zeros_like(m);
        g.adapter_weight = test::random_matrix(rng, 3, 4);
        g.classifier_bias = test::random_matrix(rng, 2, 1).col(0);
        g.scale(50.0 / g.norm());
        sgd_step(m, opt, g);
        CHECK(std::abs(opt.last_grad_norm - 50.0) < 1e-9);
        CHECK(std::abs(opt.last_applied_norm - 5.0) < 1e-9);
    }
}

TEST_CASE("nesterov momentum update") {
    AdapterClassifier m;
    m.adapter_weight = Matrix::Constant(1, 1, 2.0);
    m.adapter_bias = Vector::Zero(1);
    m.classifier_weight = Matrix::Zero(1, 1);
    m.classifier_bias = Vector::Zero(1);
    OptimConfig cfg;
    cfg.lr0 = 0.1;
    cfg.use_schedule = false;
    cfg.weight_decay = 0.5;
    cfg.momentum = 0.9;
    OptimState opt = OptimState::create(m, cfg, 2);
    ParamGrads g = ParamGrads::zeros_like(m);
    g.adapter_weight(0, 0) = 1.0;
    // Step 1: g' = 1 + 0.5*2 = 2, v = 2, w = 2 - 0.1*(2 + 0.9*2) = 1.62.
    sgd_step(m, opt, g);
    CHECK(m.adapter_weight(0, 0) == doctest::Approx(1.62).epsilon(1e-14));
    // Step 2: g' = 1 + 0.81 = 1.81, v = 1.8 + 1.81 = 3.61, w = 1.62 - 0.1*(1.81 + 3.249) = 1.1141.
    sgd_step(m, opt, g);
    CHECK(m.adapter_weight(0, 0) == doctest::Approx(1.1141).epsilon(1e-13));
}

TEST_CASE("clipping never exceeds the bound") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        AdapterClassifier m = random_model(rng, 3, 2, 2, Activation::Tanh);
        m.classifier_frozen = trial % 2 == 0;
        OptimState opt = OptimState::create(m, {}, 1);
        ParamGrads g = ParamGrads::zeros_like(m);
        g.adapter_weight = test::random_matrix(rng, 2, 3, std::pow(10.0, 3.0 * rng.uniform() - 1.0));
        g.classifier_weight = test::random_matrix(rng, 2, 2, 10.0);
        sgd_step(m, opt, g);
        CHECK(opt.last_applied_norm <= 5.0 + 1e-9);
    }
}

TEST_CASE("frozen classifier is bitwise unchanged by training steps") {
    Rng rng(9);
    AdapterClassifier m = random_model(rng, 5, 4, 3, Activation::Tanh);
    m.classifier_frozen = true;
    const Matrix w = m.classifier_weight;
    const Vector b = m.classifier_bias;
    OptimState opt = OptimState::create(m, {}, 50);
    for (int i = 0; i < 50; ++i) {
        const Matrix x = test::random_matrix(rng, 6, 5);
        const ForwardResult fr = forward(m, x);
        ParamGrads g = backward(m, fr.cache, test::random_matrix(rng, 6, 3));
        g.classifier_weight.setConstant(1.0);
        sgd_step(m, opt, g);
    }
    CHECK(std::memcmp(w.data(), m.classifier_weight.data(), sizeof(double) * w.size()) == 0);
    CHECK(std::memcmp(b.data(), m.classifier_bias.data(), sizeof(double) * b.size()) == 0);
    CHECK(opt.step == 50);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(10);
    test::TempDir dir("model");
    for (auto act : {Activation::Identity, Activation::Tanh}) {
        AdapterClassifier m = AdapterClassifier::create(32, 256, 10, act, rng);
        m.classifier_frozen = act == Activation::Tanh;
        m.adapter_bias(0) = std::nextafter(1.0, 2.0);
        const auto bytes = encode_checkpoint(m);
        CHECK(bytes.size() == kCheckpointHeaderBytes + 8 * (256 * 32 + 256 + 10 * 256 + 10));
        const AdapterClassifier back = decode_checkpoint(bytes);
        CHECK(back.same_parameters(m));
        CHECK(back.activation == act);
        CHECK(back.classifier_frozen == m.classifier_frozen);
        CHECK(encode_checkpoint(back) == bytes);

        save_checkpoint(m, dir / "m.tabm");
        const AdapterClassifier loaded = load_checkpoint(dir / "m.tabm");
        CHECK(loaded.input_dim() == 32);
        CHECK(loaded.hidden_dim() == 256);
        CHECK(loaded.num_classes() == 10);
        CHECK(loaded.same_parameters(m));
    }

    const auto good = encode_checkpoint(AdapterClassifier::create(2, 2, 2, Activation::Identity, rng));
    auto bad = good;
    bad[1] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = good;
    bad.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = good;
    bad[20] = 7;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.tabm"), IoError);
}
