#include "sfda/pipeline.hpp"

#include "sfda/errors.hpp"

#include <cmath>
#include <limits>

namespace sfda {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<int> predict(const AdapterClassifier& model, const Matrix& x) {
    const ForwardResult fwd = forward(model, x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(argmax(row_span(fwd.logits, i)));
    }
    return out;
}

EvalMetrics evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 std::size_t num_classes) {
    if (predicted.size() != truth.size() || truth.empty()) {
        throw InvalidArgument("evaluate: prediction and label counts disagree");
    }
    EvalMetrics m;
    m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(predicted[i]);
        if (t >= num_classes || p >= num_classes) {
            throw InvalidArgument("evaluate: class index out of range");
        }
        ++m.confusion[t][p];
        correct += t == p ? 1 : 0;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    m.per_class_accuracy.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t total = 0;
        for (std::size_t v : m.confusion[c]) total += v;
        m.per_class_accuracy[c] =
            total == 0 ? kNaN : static_cast<double>(m.confusion[c][c]) / static_cast<double>(total);
    }
    return m;
}

EvalMetrics evaluate(const AdapterClassifier& model, const FeatureDataset& ds) {
    const auto& labels = ds.require_labels("evaluate");
    if (static_cast<std::size_t>(ds.num_classes) != model.num_classes()) {
        throw InvalidArgument("evaluate: dataset and model disagree on the number of classes");
    }
    return evaluate_predictions(predict(model, ds.features), labels, model.num_classes());
}

PseudoLabelMetrics pseudo_label_metrics(const PseudoLabelSet& pls, const std::vector<int>& true_labels) {
    if (true_labels.size() != pls.size()) {
        throw InvalidArgument("pseudo_label_metrics: label count does not match the pseudo-label set");
    }
    PseudoLabelMetrics m;
    std::size_t correct = 0;
    std::size_t retained = 0;
    std::size_t retained_correct = 0;
    for (std::size_t i = 0; i < pls.size(); ++i) {
        const bool ok = pls.labels[i] == true_labels[i];
        correct += ok ? 1 : 0;
        if (pls.retained[i]) {
            ++retained;
            retained_correct += ok ? 1 : 0;
        }
    }
    m.pl_accuracy = pls.size() ? static_cast<double>(correct) / static_cast<double>(pls.size()) : kNaN;
    m.retained_pl_accuracy = retained ? static_cast<double>(retained_correct) / static_cast<double>(retained) : kNaN;
    std::size_t hits = 0;
    for (std::size_t c = 0; c < pls.trusted.per_class.size(); ++c) {
        for (const auto& e : pls.trusted.per_class[c]) {
            if (e.index >= true_labels.size()) {
                throw InvalidArgument("pseudo_label_metrics: trusted index out of range");
            }
            hits += true_labels[e.index] == static_cast<int>(c) ? 1 : 0;
            ++m.trusted_entries;
        }
    }
    m.trusted_precision =
        m.trusted_entries ? static_cast<double>(hits) / static_cast<double>(m.trusted_entries) : kNaN;
    return m;
}

// ---------------------------------------------------------------------------

void SourceTrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("source.epochs must be >= 1");
    if (batch_size < 2) throw InvalidArgument("source.batch_size must be >= 2");
    if (!(lr0 > 0.0)) throw InvalidArgument("source.lr0 must be > 0");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
        throw InvalidArgument("source.label_smoothing must lie in [0, 1)");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidArgument("source.train_fraction must lie in (0, 1)");
    if (hidden_dim < 1) throw InvalidArgument("source.hidden_dim must be >= 1");
}

bool BestCheckpoint::offer(std::size_t epoch, double val_accuracy, const AdapterClassifier& model) {
    if (model_ && !(val_accuracy > accuracy_)) {
        return false;
    }
    model_ = model;
    epoch_ = epoch;
    accuracy_ = val_accuracy;
    return true;
}

SourceTrainResult train_source(const SourceTrainConfig& cfg, const FeatureDataset& source) {
    cfg.validate();
    source.validate_as_source();
    const Rng root(cfg.seed);
    Rng split_rng = root.fork("split");
    Rng init_rng = root.fork("init");
    Rng batch_rng = root.fork("batches");

    const Split parts = split(source, cfg.train_fraction, split_rng);
    const auto num_classes = static_cast<std::size_t>(source.num_classes);
    AdapterClassifier model =
        AdapterClassifier::create(source.dim(), cfg.hidden_dim, num_classes, cfg.activation, init_rng);

    const std::size_t n_train = parts.train.size();
    const std::size_t per_epoch = batch_count(n_train, cfg.batch_size, false);
    OptimConfig optim = cfg.optim;
    optim.lr0 = cfg.lr0;
    OptimState opt = OptimState::create(model, optim, cfg.epochs * per_epoch);

    const Matrix targets = smoothed_label_matrix(*parts.train.labels, num_classes, cfg.label_smoothing);
    SourceReport report;
    report.config = cfg;
    report.train_size = n_train;
    report.val_size = parts.val.size();
    BestCheckpoint best;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const BatchPlan plan = make_batches(n_train, cfg.batch_size, true, false, batch_rng);
        double loss_sum = 0.0;
        for (const auto& batch : plan.batches) {
            const Matrix xb = gather_rows(parts.train.features, batch);
            const Matrix yb = gather_rows(targets, batch);
            const ForwardResult fwd = forward(model, xb);
            const Matrix p = softmax_rows(fwd.logits, 1.0);
            const double inv_b = 1.0 / static_cast<double>(batch.size());
            double loss = 0.0;
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                loss += cross_entropy(row_span(yb, i), row_span(p, i));
            }
            loss_sum += loss * inv_b;
            const Matrix grad = inv_b * (p - yb);
            sgd_step(model, opt, backward(model, fwd.cache, grad));
        }
        const double val_acc = evaluate(model, parts.val).accuracy;
        report.epochs.push_back({epoch, loss_sum / static_cast<double>(plan.num_batches()), val_acc});
        best.offer(epoch, val_acc, model);
    }
    report.best_epoch = best.epoch();
    report.best_val_accuracy = best.accuracy();
    AdapterClassifier out = best.model();
    out.revision = 0;
    return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------

void AdaptConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("adapt.epochs must be >= 1");
    if (batch_size < 2) throw InvalidArgument("adapt.batch_size must be >= 2");
    if (!(lr0 > 0.0)) throw InvalidArgument("adapt.lr0 must be > 0");
    if (!(mixup_beta > 0.0)) throw InvalidArgument("adapt.mixup_beta must be > 0");
    if (tsal.epochs != epochs) {
        throw InvalidArgument("adapt.epochs (" + std::to_string(epochs) + ") must equal tsal.epochs (" +
                              std::to_string(tsal.epochs) + ")");
    }
    ftsp.validate();
    tsal.validate();
}

EpochMonitor make_label_monitor(const FeatureDataset& target) {
    const auto& labels = target.require_labels("label monitor");
    return [&target, &labels](const PseudoLabelSet& pls, const AdapterClassifier& model) {
        const PseudoLabelMetrics plm = pseudo_label_metrics(pls, labels);
        return EpochMetrics{plm.pl_accuracy, evaluate(model, target).accuracy, plm.trusted_precision};
    };
}

AdaptResult adapt(const AdaptConfig& cfg, const AdapterClassifier& source_model, const FeatureView& target,
                  const EpochMonitor& monitor) {
    cfg.validate();
    source_model.validate();
    if (target.dim() != source_model.input_dim()) {
        throw InvalidArgument("adapt: target features have dimension " + std::to_string(target.dim()) +
                              ", model expects " + std::to_string(source_model.input_dim()));
    }
    if (static_cast<std::size_t>(target.num_classes()) != source_model.num_classes()) {
        throw InvalidArgument("adapt: target and model disagree on the number of classes");
    }
    const std::size_t n = target.size();
    const std::size_t per_epoch = batch_count(n, cfg.batch_size, true);
    if (per_epoch == 0) {
        throw InvalidArgument("adapt: target set needs at least 2 samples");
    }
    const std::size_t num_classes = source_model.num_classes();

    AdapterClassifier model = source_model;
    model.classifier_frozen = true;
    model.revision = 0;
    OptimConfig optim = cfg.optim;
    optim.lr0 = cfg.lr0;
    OptimState opt = OptimState::create(model, optim, cfg.epochs * per_epoch);

    const Rng root(cfg.seed);
    Rng batch_rng = root.fork("batches");
    Rng mix_rng = root.fork("mixup");
    const Matrix& x = target.features();

    RunReport report;
    report.config = cfg;
    report.seed = cfg.seed;
    report.total_steps = opt.total_steps;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const PseudoLabelSet pls = ftsp_pipeline(model, x, cfg.ftsp);
        const Matrix smoothed = smoothed_label_matrix(pls.labels, num_classes, cfg.tsal.smoothing);
        const BatchPlan plan = make_batches(n, cfg.batch_size, true, true, batch_rng);

        AdaptEpochRecord rec{};
        rec.epoch = epoch;
        rec.tau_dis = tau_dis(epoch, cfg.tsal);
        rec.tau_div = tau_div(epoch, cfg.tsal);
        rec.spreading_isolated = pls.isolated_count;
        double dis_sum = 0.0;
        double div_sum = 0.0;
        for (const auto& batch : plan.batches) {
            Matrix xb = gather_rows(x, batch);
            Matrix yb = gather_rows(smoothed, batch);
            if (cfg.mixup_enabled) {
                MixupResult mixed = mixup(xb, yb, cfg.mixup_beta, cfg.mixup_beta, mix_rng);
                xb = std::move(mixed.features);
                yb = std::move(mixed.targets);
            }
            const ForwardResult fwd = forward(model, xb);
            const TsalBatchResult loss = tsal_batch_soft(fwd.logits, yb, epoch, cfg.tsal);
            dis_sum += loss.dis;
            div_sum += loss.div;
            sgd_step(model, opt, backward(model, fwd.cache, loss.dloss_dlogits));
            ++rec.steps;
        }
        rec.mean_dis = dis_sum / static_cast<double>(rec.steps);
        rec.mean_div = div_sum / static_cast<double>(rec.steps);
        if (monitor) {
            const EpochMetrics m = monitor(pls, model);
            rec.pseudo_label_accuracy = m.pseudo_label_accuracy;
            rec.target_accuracy = m.target_accuracy;
            rec.trusted_precision = m.trusted_precision;
        } else {
            rec.pseudo_label_accuracy = kNaN;
            rec.target_accuracy = kNaN;
            rec.trusted_precision = kNaN;
        }
        report.epochs.push_back(rec);
    }
    report.final_lr = opt.last_lr;
    if (monitor && !report.epochs.empty()) {
        report.final_target_accuracy = report.epochs.back().target_accuracy;
    }
    model.revision = 0;
    return {std::move(model), std::move(report)};
}

} // namespace sfda
