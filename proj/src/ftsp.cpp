#include "sfda/ftsp.hpp"

#include "sfda/errors.hpp"
#include "sfda/mathcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sfda {

const char* trusted_classifier_name(TrustedClassifierKind k) {
    return k == TrustedClassifierKind::Mlr ? "mlr" : "lda";
}

TrustedClassifierKind parse_trusted_classifier(const std::string& name) {
    if (name == "mlr") return TrustedClassifierKind::Mlr;
    if (name == "lda") return TrustedClassifierKind::Lda;
    throw InvalidArgument("unknown trusted classifier '" + name + "' (expected mlr or lda)");
}

const char* label_stage_name(LabelStage s) {
    return s == LabelStage::TrustedClassifier ? "trusted_classifier" : "spreading";
}

void FtspConfig::validate() const {
    if (k < 1) throw InvalidArgument("ftsp.k must be >= 1");
    if (!(mlr_l2_lambda >= 0.0)) throw InvalidArgument("ftsp.mlr_l2_lambda must be >= 0");
    if (mlr_max_iter < 1) throw InvalidArgument("ftsp.mlr_max_iter must be >= 1");
    if (!(lda_shrinkage >= 0.0 && lda_shrinkage <= 1.0))
        throw InvalidArgument("ftsp.lda_shrinkage must lie in [0, 1]");
    if (!(deletion_frac >= 0.0 && deletion_frac < 1.0))
        throw InvalidArgument("ftsp.deletion_frac must lie in [0, 1)");
    if (!(spreading.rbf_gamma > 0.0)) throw InvalidArgument("ftsp.rbf_gamma must be > 0");
    if (!(spreading.alpha > 0.0 && spreading.alpha < 1.0))
        throw InvalidArgument("ftsp.spreading_alpha must lie in (0, 1)");
    if (spreading.max_iter < 1) throw InvalidArgument("ftsp.spreading_max_iter must be >= 1");
    if (!(spreading.tol >= 0.0)) throw InvalidArgument("ftsp.spreading_tol must be >= 0");
}

std::size_t TrustedSet::total_entries() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.size();
    return n;
}

TrustedSet select_trusted(const Matrix& probs, std::size_t k) {
    const auto n = static_cast<std::size_t>(probs.rows());
    if (k < 1 || k > n) {
        throw InvalidArgument("select_trusted: K=" + std::to_string(k) + " must lie in [1, N=" +
                              std::to_string(n) + "]");
    }
    TrustedSet ts;
    ts.per_class.resize(static_cast<std::size_t>(probs.cols()));
    std::vector<double> column(n);
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = probs(static_cast<Eigen::Index>(i), c);
        }
        for (std::size_t idx : topk_indices(column, k)) {
            ts.per_class[static_cast<std::size_t>(c)].push_back({idx, column[idx]});
        }
    }
    return ts;
}

TrustedDataset build_trusted_dataset(const Matrix& target_features, const TrustedSet& ts) {
    TrustedDataset out;
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < ts.per_class.size(); ++c) {
        for (const auto& e : ts.per_class[c]) {
            if (e.index >= static_cast<std::size_t>(target_features.rows())) {
                throw InvalidArgument("build_trusted_dataset: trusted index out of range");
            }
            rows.push_back(e.index);
            out.labels.push_back(static_cast<int>(c));
        }
    }
    Matrix picked(static_cast<Eigen::Index>(rows.size()), target_features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        picked.row(static_cast<Eigen::Index>(r)) = target_features.row(static_cast<Eigen::Index>(rows[r]));
    }
    out.features = l2_normalize_rows(picked);
    return out;
}

Matrix TrustedClassifier::scores(const Matrix& normalized_features) const {
    Matrix s = normalized_features * weight.transpose();
    s.rowwise() += bias.transpose();
    return s;
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

namespace {

void check_training_labels(const Matrix& x, const std::vector<int>& y, std::size_t num_classes) {
    if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) {
        throw InvalidArgument("trusted classifier: sample and label counts disagree");
    }
    std::vector<std::size_t> counts(num_classes, 0);
    for (int label : y) {
        if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
            throw InvalidArgument("trusted classifier: label out of range");
        }
        ++counts[static_cast<std::size_t>(label)];
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
            throw InvalidArgument("trusted classifier: class " + std::to_string(c) + " has no sample");
        }
    }
}

double mlr_value(const Matrix& x, const std::vector<int>& y, const Matrix& weight, const Vector& bias,
                 double l2_lambda, Matrix* probs_out) {
    Matrix scores = x * weight.transpose();
    scores.rowwise() += bias.transpose();
    const Matrix probs = softmax_rows(scores, 1.0);
    double ce = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ce -= std::log(std::max(probs(static_cast<Eigen::Index>(i), y[i]), kProbFloor));
    }
    ce /= static_cast<double>(y.size());
    if (probs_out) {
        *probs_out = probs;
    }
    return ce + 0.5 * l2_lambda * weight.squaredNorm();
}

} // namespace

MlrObjective mlr_objective(const Matrix& x, const std::vector<int>& y, std::size_t num_classes,
                           const Matrix& weight, const Vector& bias, double l2_lambda) {
    (void)num_classes;
    MlrObjective out;
    Matrix probs;
    out.value = mlr_value(x, y, weight, bias, l2_lambda, &probs);
    Matrix residual = probs;
    for (std::size_t i = 0; i < y.size(); ++i) {
        residual(static_cast<Eigen::Index>(i), y[i]) -= 1.0;
    }
    residual /= static_cast<double>(y.size());
    out.grad_weight = residual.transpose() * x + l2_lambda * weight;
    out.grad_bias = residual.colwise().sum().transpose();
    return out;
}

MlrFit fit_mlr(const Matrix& x, const std::vector<int>& y, std::size_t num_classes, double l2_lambda,
               std::size_t max_iter, double grad_tol) {
    check_training_labels(x, y, num_classes);
    const auto c = static_cast<Eigen::Index>(num_classes);
    Matrix weight = Matrix::Zero(c, x.cols());
    Vector bias = Vector::Zero(c);

    MlrFit fit;
    MlrObjective obj = mlr_objective(x, y, num_classes, weight, bias, l2_lambda);
    fit.objective_trace.push_back(obj.value);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        const double gnorm = std::sqrt(obj.grad_weight.squaredNorm() + obj.grad_bias.squaredNorm());
        fit.final_grad_norm = gnorm;
        if (gnorm <= grad_tol) {
            break;
        }
        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            const Matrix w_try = weight - step * obj.grad_weight;
            const Vector b_try = bias - step * obj.grad_bias;
            const double v = mlr_value(x, y, w_try, b_try, l2_lambda, nullptr);
            if (v < obj.value) {
                weight = w_try;
                bias = b_try;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            break;
        }
        obj = mlr_objective(x, y, num_classes, weight, bias, l2_lambda);
        fit.objective_trace.push_back(obj.value);
        fit.iterations = iter + 1;
        fit.final_grad_norm = std::sqrt(obj.grad_weight.squaredNorm() + obj.grad_bias.squaredNorm());
    }
    fit.classifier.kind = TrustedClassifierKind::Mlr;
    fit.classifier.weight = std::move(weight);
    fit.classifier.bias = std::move(bias);
    return fit;
}

// ---------------------------------------------------------------------------
// Shrinkage LDA
// ---------------------------------------------------------------------------

TrustedClassifier fit_lda(const Matrix& x, const std::vector<int>& y, std::size_t num_classes,
                          double shrinkage) {
    check_training_labels(x, y, num_classes);
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
        throw InvalidArgument("fit_lda: shrinkage must lie in [0, 1]");
    }
    const auto c = static_cast<Eigen::Index>(num_classes);
    const Eigen::Index h = x.cols();
    const auto n = static_cast<double>(y.size());

    Matrix means = Matrix::Zero(c, h);
    Vector counts = Vector::Zero(c);
    for (std::size_t i = 0; i < y.size(); ++i) {
        means.row(y[i]) += x.row(static_cast<Eigen::Index>(i));
        counts(y[i]) += 1.0;
    }
    for (Eigen::Index k = 0; k < c; ++k) {
        means.row(k) /= counts(k);
    }
    Matrix centered = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        centered.row(static_cast<Eigen::Index>(i)) -= means.row(y[i]);
    }
    const Matrix emp = (centered.transpose() * centered) / n;

    // Isotropic target scale; falls back to 1 when the pooled scatter is zero
    // (one sample per class), where the trace carries no scale information.
    double scale = emp.trace() / static_cast<double>(h);
    if (scale <= 1e-12) {
        scale = 1.0;
    }
    Matrix shrunk = (1.0 - shrinkage) * emp;
    shrunk.diagonal().array() += shrinkage * scale;

    const Eigen::LLT<Matrix> llt(shrunk);
    if (llt.info() != Eigen::Success) {
        throw NumericError("fit_lda: shrunk covariance is singular; use shrinkage > 0");
    }
    const Matrix solved = llt.solve(Matrix(means.transpose())); // h x C
    if (!solved.allFinite()) {
        throw NumericError("fit_lda: covariance solve produced non-finite values; use shrinkage > 0");
    }

    TrustedClassifier tc;
    tc.kind = TrustedClassifierKind::Lda;
    tc.weight = solved.transpose();
    tc.bias.resize(c);
    const double log_prior = std::log(1.0 / static_cast<double>(num_classes));
    for (Eigen::Index k = 0; k < c; ++k) {
        tc.bias(k) = -0.5 * means.row(k).dot(tc.weight.row(k)) + log_prior;
    }
    return tc;
}

// ---------------------------------------------------------------------------

PseudoInference infer_pseudo(const TrustedClassifier& tc, const Matrix& target_features) {
    if (target_features.cols() != tc.weight.cols()) {
        throw InvalidArgument("infer_pseudo: feature dimension does not match the classifier");
    }
    PseudoInference out;
    out.probs = softmax_rows(tc.scores(l2_normalize_rows(target_features)), 1.0);
    out.labels.resize(static_cast<std::size_t>(out.probs.rows()));
    for (Eigen::Index i = 0; i < out.probs.rows(); ++i) {
        out.labels[static_cast<std::size_t>(i)] = static_cast<int>(argmax(row_span(out.probs, i)));
    }
    return out;
}

std::vector<bool> delete_uncertain(const Matrix& probs, const std::vector<int>& labels,
                                   double deletion_frac) {
    if (!(deletion_frac >= 0.0 && deletion_frac < 1.0)) {
        throw InvalidArgument("delete_uncertain: deletion_frac must lie in [0, 1)");
    }
    if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
        throw InvalidArgument("delete_uncertain: probability and label counts disagree");
    }
    std::vector<bool> retained(labels.size(), true);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(probs.cols()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= probs.cols()) {
            throw InvalidArgument("delete_uncertain: label out of range");
        }
        members[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& idx = members[c];
        if (idx.empty()) {
            continue;
        }
        const auto drop = static_cast<std::size_t>(
            std::floor(deletion_frac * static_cast<double>(idx.size()) + 1e-9));
        const auto conf = [&](std::size_t i) { return probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)); };
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (conf(a) != conf(b)) {
                return conf(a) < conf(b);
            }
            return a > b;
        });
        for (std::size_t r = 0; r < drop; ++r) {
            retained[idx[r]] = false;
        }
    }
    return retained;
}

// ---------------------------------------------------------------------------
// Label spreading
// ---------------------------------------------------------------------------

Matrix spreading_affinity(const Matrix& features, double rbf_gamma) {
    const Eigen::Index n = features.rows();
    const Vector sq_norms = features.rowwise().squaredNorm();
    // Only the lower triangle of the Gram matrix is formed; W is mirrored from it.
    Matrix w = Matrix::Zero(n, n);
    w.selfadjointView<Eigen::Lower>().rankUpdate(features);
    for (Eigen::Index i = 0; i < n; ++i) {
        w(i, i) = 0.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double d2 = std::max(0.0, sq_norms(i) + sq_norms(j) - 2.0 * w(i, j));
            const double a = std::exp(-rbf_gamma * d2);
            w(i, j) = a;
            w(j, i) = a;
        }
    }
    Vector inv_sqrt_deg(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double deg = w.row(i).sum();
        inv_sqrt_deg(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = w(i, j) * (inv_sqrt_deg(i) * inv_sqrt_deg(j));
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

SpreadingResult label_spreading(const Matrix& features, const std::vector<int>& labels,
                                const std::vector<bool>& retained, std::size_t num_classes,
                                const SpreadingConfig& cfg) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n || retained.size() != n) {
        throw InvalidArgument("label_spreading: label/mask sizes do not match the feature rows");
    }
    if (n > kMaxSpreadingSamples) {
        throw InvalidArgument("label_spreading: dense graph limited to " +
                              std::to_string(kMaxSpreadingSamples) + " samples");
    }
    if (!(cfg.rbf_gamma > 0.0) || !(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
        throw InvalidArgument("label_spreading: need gamma > 0 and 0 < alpha < 1");
    }
    const auto c = static_cast<Eigen::Index>(num_classes);
    Matrix seeds = Matrix::Zero(static_cast<Eigen::Index>(n), c);
    std::size_t seed_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw InvalidArgument("label_spreading: label out of range");
        }
        if (retained[i]) {
            seeds(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
            ++seed_count;
        }
    }
    if (seed_count == 0) {
        throw InvalidArgument("label_spreading: at least one retained label is required");
    }

    const Matrix s = spreading_affinity(features, cfg.rbf_gamma);
    const Matrix clamp = (1.0 - cfg.alpha) * seeds;
    SpreadingResult out;
    Matrix f = seeds;
    for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
        Matrix next = cfg.alpha * (s * f) + clamp;
        const double change = (next - f).cwiseAbs().maxCoeff();
        f = std::move(next);
        out.iterations = iter + 1;
        if (change <= cfg.tol) {
            break;
        }
    }

    out.labels.resize(n);
    out.isolated.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = row_span(f, static_cast<Eigen::Index>(i));
        if (*std::max_element(row.begin(), row.end()) <= 0.0) {
            out.isolated[i] = true;
            out.labels[i] = labels[i];
        } else {
            out.labels[i] = static_cast<int>(argmax(row));
        }
    }
    out.scores = std::move(f);
    return out;
}

// ---------------------------------------------------------------------------

PseudoLabelSet ftsp_pipeline(const AdapterClassifier& model, const Matrix& target_features_raw,
                             const FtspConfig& cfg) {
    cfg.validate();
    const ForwardResult fwd = forward(model, target_features_raw);
    const Matrix source_probs = softmax_rows(fwd.logits, 1.0);
    const std::size_t num_classes = model.num_classes();

    PseudoLabelSet pls;
    pls.num_classes = num_classes;
    pls.trusted = select_trusted(source_probs, cfg.k);
    const TrustedDataset trusted = build_trusted_dataset(fwd.features, pls.trusted);

    const TrustedClassifier tc =
        cfg.classifier == TrustedClassifierKind::Mlr
            ? fit_mlr(trusted.features, trusted.labels, num_classes, cfg.mlr_l2_lambda, cfg.mlr_max_iter,
                      cfg.mlr_grad_tol)
                  .classifier
            : fit_lda(trusted.features, trusted.labels, num_classes, cfg.lda_shrinkage);

    const Matrix normalized = l2_normalize_rows(fwd.features);
    const PseudoInference inferred = infer_pseudo(tc, normalized);
    const std::size_t n = inferred.labels.size();
    pls.classifier_labels = inferred.labels;
    pls.labels = inferred.labels;
    pls.confidence.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        pls.confidence[i] = inferred.probs(static_cast<Eigen::Index>(i), pls.labels[i]);
    }
    pls.retained.assign(n, true);
    pls.stage.assign(n, LabelStage::TrustedClassifier);
    if (!cfg.refinement_enabled) {
        return pls;
    }

    pls.retained = delete_uncertain(inferred.probs, inferred.labels, cfg.deletion_frac);
    const SpreadingResult spread =
        label_spreading(normalized, inferred.labels, pls.retained, num_classes, cfg.spreading);
    for (std::size_t i = 0; i < n; ++i) {
        if (spread.isolated[i]) {
            ++pls.isolated_count;
            continue;
        }
        const bool filled = !pls.retained[i];
        const bool relabeled = spread.labels[i] != pls.labels[i];
        if (filled || relabeled) {
            const auto row = spread.scores.row(static_cast<Eigen::Index>(i));
            pls.labels[i] = spread.labels[i];
            pls.confidence[i] = row(spread.labels[i]) / row.sum();
            pls.stage[i] = LabelStage::Spreading;
        }
    }
    return pls;
}

void write_pseudo_label_csv(std::ostream& out, const PseudoLabelSet& pls) {
    out << "index,label,confidence,retained,stage\n";
    for (std::size_t i = 0; i < pls.size(); ++i) {
        out << i << ',' << pls.labels[i] << ',' << format_real(pls.confidence[i]) << ','
            << (pls.retained[i] ? 1 : 0) << ',' << label_stage_name(pls.stage[i]) << '\n';
    }
}

} // namespace sfda
