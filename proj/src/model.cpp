#include "sfda/model.hpp"

#include "sfda/binary_io.hpp"
#include "sfda/errors.hpp"

#include <cmath>
#include <string>

namespace sfda {

const char* activation_name(Activation a) {
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    throw InvalidArgument("unknown activation '" + name + "' (expected identity or tanh)");
}

namespace {

void fill_uniform(Eigen::Ref<Matrix> m, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
        }
    }
}

void fill_uniform(Vector& v, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = bound * (2.0 * rng.uniform() - 1.0);
    }
}

} // namespace

AdapterClassifier AdapterClassifier::create(std::size_t input_dim, std::size_t hidden_dim,
                                            std::size_t num_classes, Activation activation, Rng& rng) {
    if (input_dim == 0 || hidden_dim == 0 || num_classes == 0) {
        throw InvalidArgument("model dimensions must be positive");
    }
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    const auto c = static_cast<Eigen::Index>(num_classes);
    AdapterClassifier m;
    m.activation = activation;
    m.adapter_weight.resize(h, d);
    m.adapter_bias.resize(h);
    m.classifier_weight.resize(c, h);
    m.classifier_bias.resize(c);
    const double adapter_bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double classifier_bound = 1.0 / std::sqrt(static_cast<double>(h));
    fill_uniform(m.adapter_weight, adapter_bound, rng);
    fill_uniform(m.adapter_bias, adapter_bound, rng);
    fill_uniform(m.classifier_weight, classifier_bound, rng);
    fill_uniform(m.classifier_bias, classifier_bound, rng);
    return m;
}

void AdapterClassifier::validate() const {
    const auto h = adapter_weight.rows();
    if (adapter_weight.cols() < 1 || h < 1 || classifier_weight.rows() < 1) {
        throw InvalidArgument("model has an empty dimension");
    }
    if (adapter_bias.size() != h || classifier_weight.cols() != h ||
        classifier_bias.size() != classifier_weight.rows()) {
        throw InvalidArgument("model parameter shapes are inconsistent");
    }
}

bool AdapterClassifier::same_parameters(const AdapterClassifier& o) const {
    return activation == o.activation && classifier_frozen == o.classifier_frozen &&
           adapter_weight == o.adapter_weight && adapter_bias == o.adapter_bias &&
           classifier_weight == o.classifier_weight && classifier_bias == o.classifier_bias;
}

ForwardResult forward(const AdapterClassifier& m, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != m.input_dim()) {
        throw InvalidArgument("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                              std::to_string(m.input_dim()));
    }
    ForwardResult out;
    Matrix pre = x * m.adapter_weight.transpose();
    pre.rowwise() += m.adapter_bias.transpose();
    Matrix features = m.activation == Activation::Tanh ? Matrix(pre.array().tanh()) : pre;
    out.logits = features * m.classifier_weight.transpose();
    out.logits.rowwise() += m.classifier_bias.transpose();
    out.features = features;
    out.cache.input = x;
    out.cache.pre_activation = std::move(pre);
    out.cache.features = std::move(features);
    out.cache.revision = m.revision;
    return out;
}

ParamGrads ParamGrads::zeros_like(const AdapterClassifier& m) {
    ParamGrads g;
    g.adapter_weight = Matrix::Zero(m.adapter_weight.rows(), m.adapter_weight.cols());
    g.adapter_bias = Vector::Zero(m.adapter_bias.size());
    g.classifier_weight = Matrix::Zero(m.classifier_weight.rows(), m.classifier_weight.cols());
    g.classifier_bias = Vector::Zero(m.classifier_bias.size());
    return g;
}

double ParamGrads::norm(bool include_classifier) const {
    double sq = adapter_weight.squaredNorm() + adapter_bias.squaredNorm();
    if (include_classifier) {
        sq += classifier_weight.squaredNorm() + classifier_bias.squaredNorm();
    }
    return std::sqrt(sq);
}

void ParamGrads::scale(double s) {
    adapter_weight *= s;
    adapter_bias *= s;
    classifier_weight *= s;
    classifier_bias *= s;
}

ParamGrads backward(const AdapterClassifier& m, const ForwardCache& cache, const Matrix& dloss_dlogits) {
    if (cache.revision != m.revision) {
        throw ContractError("backward: cache was produced by a different model revision");
    }
    const auto b = cache.input.rows();
    if (cache.input.cols() != m.adapter_weight.cols() || cache.features.cols() != m.adapter_weight.rows() ||
        cache.pre_activation.rows() != b || cache.features.rows() != b) {
        throw ContractError("backward: cache shapes do not match the model");
    }
    if (dloss_dlogits.rows() != b || dloss_dlogits.cols() != m.classifier_weight.rows()) {
        throw ContractError("backward: dL/dlogits shape does not match the cached batch");
    }

    ParamGrads g;
    if (m.classifier_frozen) {
        g.classifier_weight = Matrix::Zero(m.classifier_weight.rows(), m.classifier_weight.cols());
        g.classifier_bias = Vector::Zero(m.classifier_bias.size());
    } else {
        g.classifier_weight = dloss_dlogits.transpose() * cache.features;
        g.classifier_bias = dloss_dlogits.colwise().sum().transpose();
    }
    Matrix dfeat = dloss_dlogits * m.classifier_weight;
    if (m.activation == Activation::Tanh) {
        dfeat.array() *= 1.0 - cache.features.array().square();
    }
    g.adapter_weight = dfeat.transpose() * cache.input;
    g.adapter_bias = dfeat.colwise().sum().transpose();
    return g;
}

double lr_at(std::size_t t, std::size_t total_steps, double lr0) {
    if (total_steps < 1) {
        throw InvalidArgument("lr_at: total steps must be >= 1");
    }
    if (t > total_steps) {
        throw InvalidArgument("lr_at: step index past the schedule end");
    }
    const double progress = static_cast<double>(t) / static_cast<double>(total_steps);
    return lr0 * std::pow(1.0 + 10.0 * progress, -0.75);
}

OptimState OptimState::create(const AdapterClassifier& m, const OptimConfig& cfg, std::size_t total_steps) {
    if (total_steps < 1) {
        throw InvalidArgument("optimizer needs at least one step");
    }
    if (!(cfg.lr0 > 0.0) || !(cfg.momentum >= 0.0 && cfg.momentum < 1.0) || !(cfg.weight_decay >= 0.0) ||
        !(cfg.clip_norm > 0.0)) {
        throw InvalidArgument("optimizer config out of range");
    }
    OptimState s;
    s.config = cfg;
    s.velocity = ParamGrads::zeros_like(m);
    s.total_steps = total_steps;
    return s;
}

namespace {

template <typename Param>
void momentum_update(Param& param, Param& velocity, const Param& grad, double lr, const OptimConfig& cfg) {
    velocity = cfg.momentum * velocity + grad;
    if (cfg.nesterov) {
        param -= lr * (grad + cfg.momentum * velocity);
    } else {
        param -= lr * velocity;
    }
}

} // namespace

void sgd_step(AdapterClassifier& m, OptimState& opt, const ParamGrads& grads) {
    if (opt.step >= opt.total_steps) {
        throw ContractError("sgd_step: step " + std::to_string(opt.step) + " is past the scheduled " +
                            std::to_string(opt.total_steps) + " steps");
    }
    if (grads.adapter_weight.rows() != m.adapter_weight.rows() ||
        grads.adapter_weight.cols() != m.adapter_weight.cols() ||
        grads.adapter_bias.size() != m.adapter_bias.size() ||
        grads.classifier_weight.rows() != m.classifier_weight.rows() ||
        grads.classifier_weight.cols() != m.classifier_weight.cols() ||
        grads.classifier_bias.size() != m.classifier_bias.size()) {
        throw InvalidArgument("sgd_step: gradient shapes do not match the model");
    }
    const OptimConfig& cfg = opt.config;
    const bool train_classifier = !m.classifier_frozen;

    ParamGrads g = grads;
    g.adapter_weight += cfg.weight_decay * m.adapter_weight;
    g.adapter_bias += cfg.weight_decay * m.adapter_bias;
    if (train_classifier) {
        g.classifier_weight += cfg.weight_decay * m.classifier_weight;
        g.classifier_bias += cfg.weight_decay * m.classifier_bias;
    }

    const double norm = g.norm(train_classifier);
    opt.last_grad_norm = norm;
    if (norm > cfg.clip_norm) {
        g.scale(cfg.clip_norm / norm);
    }
    opt.last_applied_norm = g.norm(train_classifier);

    const double lr = cfg.use_schedule ? lr_at(opt.step, opt.total_steps, cfg.lr0) : cfg.lr0;
    opt.last_lr = lr;
    momentum_update(m.adapter_weight, opt.velocity.adapter_weight, g.adapter_weight, lr, cfg);
    momentum_update(m.adapter_bias, opt.velocity.adapter_bias, g.adapter_bias, lr, cfg);
    if (train_classifier) {
        momentum_update(m.classifier_weight, opt.velocity.classifier_weight, g.classifier_weight, lr, cfg);
        momentum_update(m.classifier_bias, opt.velocity.classifier_bias, g.classifier_bias, lr, cfg);
    }
    ++opt.step;
    ++m.revision;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const AdapterClassifier& m) {
    m.validate();
    io::ByteWriter w;
    w.magic("TABM");
    w.u32(kCheckpointFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.input_dim()));
    w.u32(static_cast<std::uint32_t>(m.hidden_dim()));
    w.u32(static_cast<std::uint32_t>(m.num_classes()));
    w.u8(static_cast<std::uint8_t>(m.activation));
    w.u8(m.classifier_frozen ? 1 : 0);
    w.zeros(2);
    auto put = [&](const auto& block) {
        for (Eigen::Index i = 0; i < block.size(); ++i) {
            w.f64(block.data()[i]);
        }
    };
    put(m.adapter_weight);
    put(m.adapter_bias);
    put(m.classifier_weight);
    put(m.classifier_bias);
    return w.bytes();
}

AdapterClassifier decode_checkpoint(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes));
    r.expect_magic("TABM");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const std::size_t dims_at = r.offset();
    const std::uint32_t d = r.u32();
    const std::uint32_t h = r.u32();
    const std::uint32_t c = r.u32();
    if (d == 0 || h == 0 || c == 0) {
        throw FormatError("checkpoint declares an empty dimension", dims_at);
    }
    const std::size_t act_at = r.offset();
    const std::uint8_t act = r.u8();
    if (act > 1) {
        throw FormatError("unknown activation tag " + std::to_string(act), act_at);
    }
    const std::size_t frozen_at = r.offset();
    const std::uint8_t frozen = r.u8();
    if (frozen > 1) {
        throw FormatError("frozen flag must be 0 or 1", frozen_at);
    }
    r.skip(2);

    const std::uint64_t count = std::uint64_t{h} * d + h + std::uint64_t{c} * h + c;
    r.require(count * 8, "parameters");
    AdapterClassifier m;
    m.activation = static_cast<Activation>(act);
    m.classifier_frozen = frozen == 1;
    m.adapter_weight.resize(h, d);
    m.adapter_bias.resize(h);
    m.classifier_weight.resize(c, h);
    m.classifier_bias.resize(c);
    auto take = [&](auto& block) {
        for (Eigen::Index i = 0; i < block.size(); ++i) {
            block.data()[i] = r.f64();
        }
    };
    take(m.adapter_weight);
    take(m.adapter_bias);
    take(m.classifier_weight);
    take(m.classifier_bias);
    r.expect_end();
    return m;
}

void save_checkpoint(const AdapterClassifier& m, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(m));
}

AdapterClassifier load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

} // namespace sfda
