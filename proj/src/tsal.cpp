#include "sfda/tsal.hpp"

#include "sfda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfda {

void TsalConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("tsal.alpha must be >= 0");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InvalidArgument("tsal.smoothing must lie in [0, 1)");
    for (double t : {tau_dis_start, tau_dis_end, tau_div_start, tau_div_end}) {
        if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("tsal temperatures must be positive");
    }
    if (epochs < 1) throw InvalidArgument("tsal.epochs must be >= 1");
}

namespace {

double ramp(std::size_t epoch, std::size_t epochs, double start, double end) {
    if (epoch >= epochs) {
        throw InvalidArgument("temperature schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                              std::to_string(epochs) + ")");
    }
    if (epochs == 1) {
        return start;
    }
    return start + (end - start) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

} // namespace

double tau_dis(std::size_t epoch, const TsalConfig& cfg) {
    return ramp(epoch, cfg.epochs, cfg.tau_dis_start, cfg.tau_dis_end);
}

double tau_div(std::size_t epoch, const TsalConfig& cfg) {
    return ramp(epoch, cfg.epochs, cfg.tau_div_start, cfg.tau_div_end);
}

std::vector<double> smooth_labels(std::span<const double> one_hot, double smoothing) {
    if (one_hot.empty()) {
        throw InvalidArgument("smooth_labels: empty label vector");
    }
    std::size_t ones = 0;
    for (double v : one_hot) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            throw InvalidArgument("smooth_labels: input is not one-hot");
        }
    }
    if (ones != 1) {
        throw InvalidArgument("smooth_labels: input is not one-hot");
    }
    const double floor = smoothing / static_cast<double>(one_hot.size());
    std::vector<double> out(one_hot.size());
    for (std::size_t c = 0; c < one_hot.size(); ++c) {
        out[c] = one_hot[c] * (1.0 - smoothing) + floor;
    }
    return out;
}

Matrix smoothed_label_matrix(const std::vector<int>& labels, std::size_t num_classes, double smoothing) {
    const auto c = static_cast<Eigen::Index>(num_classes);
    Matrix out = Matrix::Constant(static_cast<Eigen::Index>(labels.size()), c,
                                  smoothing / static_cast<double>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw InvalidArgument("smoothed_label_matrix: label out of range");
        }
        out(static_cast<Eigen::Index>(i), labels[i]) += 1.0 - smoothing;
    }
    return out;
}

std::vector<double> target_distribution(std::span<const double> logits, std::span<const double> y_smooth,
                                        std::size_t epoch, const TsalConfig& cfg) {
    if (logits.size() != y_smooth.size()) {
        throw InvalidArgument("target_distribution: dimension mismatch");
    }
    ProbVector q = softmax(logits, tau_dis(epoch, cfg));
    for (std::size_t c = 0; c < q.size(); ++c) {
        q[c] += cfg.alpha * y_smooth[c];
    }
    return q;
}

TsalBatchResult tsal_batch(const Matrix& logits, const Matrix& pseudo_onehots, std::size_t epoch,
                           const TsalConfig& cfg) {
    if (pseudo_onehots.rows() != logits.rows() || pseudo_onehots.cols() != logits.cols()) {
        throw InvalidArgument("tsal_batch: pseudo-label shape does not match logits");
    }
    Matrix smoothed(pseudo_onehots.rows(), pseudo_onehots.cols());
    for (Eigen::Index i = 0; i < pseudo_onehots.rows(); ++i) {
        const auto row = smooth_labels(row_span(pseudo_onehots, i), cfg.smoothing);
        std::copy(row.begin(), row.end(), smoothed.data() + i * smoothed.cols());
    }
    return tsal_batch_soft(logits, smoothed, epoch, cfg);
}

TsalBatchResult tsal_batch_soft(const Matrix& logits, const Matrix& smoothed_targets, std::size_t epoch,
                                const TsalConfig& cfg) {
    cfg.validate();
    const Eigen::Index b = logits.rows();
    const Eigen::Index c = logits.cols();
    if (b < 2) {
        throw InvalidArgument("tsal_batch: batch size must be >= 2 for the diversity term");
    }
    if (smoothed_targets.rows() != b || smoothed_targets.cols() != c) {
        throw InvalidArgument("tsal_batch: target shape does not match logits");
    }
    const double t_dis = tau_dis(epoch, cfg);
    const double t_div = tau_div(epoch, cfg);
    const double inv_b = 1.0 / static_cast<double>(b);

    const Matrix pred = softmax_rows(logits, 1.0);
    const Matrix soft_dis = softmax_rows(logits, t_dis);
    const Matrix soft_div = softmax_rows(logits, t_div);
    const Matrix target = soft_dis + cfg.alpha * smoothed_targets;

    TsalBatchResult out;
    out.dloss_dlogits.resize(b, c);

    double dis_sum = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        dis_sum += cross_entropy(row_span(target, i), row_span(pred, i));
        // d/dl of -sum_c q_c log p_c with q fixed: (sum q) p - q.
        const double mass = target.row(i).sum();
        out.dloss_dlogits.row(i) = inv_b * (mass * pred.row(i) - target.row(i));
        if (!cfg.detach_target) {
            // Extra path through softmax(l / tau_dis) inside q.
            Eigen::RowVectorXd log_p(c);
            for (Eigen::Index k = 0; k < c; ++k) {
                log_p(k) = std::log(std::max(pred(i, k), kProbFloor));
            }
            const double mean_log_p = soft_dis.row(i).dot(log_p);
            out.dloss_dlogits.row(i) -=
                (inv_b / t_dis) * (soft_dis.row(i).array() * (log_p.array() - mean_log_p)).matrix();
        }
    }
    out.dis = dis_sum * inv_b;

    const Eigen::RowVectorXd p_bar = soft_div.colwise().sum() * inv_b;
    out.p_bar.assign(p_bar.data(), p_bar.data() + c);
    out.div = -entropy(out.p_bar);

    // d(-H(p_bar))/dp_bar = log p_bar + 1; the constant cancels through the softmax Jacobian.
    Eigen::RowVectorXd log_pbar(c);
    for (Eigen::Index k = 0; k < c; ++k) {
        log_pbar(k) = std::log(std::max(p_bar(k), kProbFloor));
    }
    for (Eigen::Index i = 0; i < b; ++i) {
        const double mean = soft_div.row(i).dot(log_pbar);
        out.dloss_dlogits.row(i) +=
            (inv_b / t_div) * (soft_div.row(i).array() * (log_pbar.array() - mean)).matrix();
    }

    out.loss = out.dis + out.div;
    return out;
}

MixupResult mixup_with(const Matrix& x, const Matrix& targets, double lambda,
                       const std::vector<std::size_t>& partner) {
    const Eigen::Index b = x.rows();
    if (targets.rows() != b || partner.size() != static_cast<std::size_t>(b)) {
        throw InvalidArgument("mixup: row counts disagree");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw InvalidArgument("mixup: lambda must lie in [0, 1]");
    }
    MixupResult out;
    out.lambda = lambda;
    out.partner = partner;
    out.features.resize(b, x.cols());
    out.targets.resize(b, targets.cols());
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto j = static_cast<Eigen::Index>(partner[static_cast<std::size_t>(i)]);
        if (j >= b) {
            throw InvalidArgument("mixup: partner index out of range");
        }
        out.features.row(i) = lambda * x.row(i) + (1.0 - lambda) * x.row(j);
        out.targets.row(i) = lambda * targets.row(i) + (1.0 - lambda) * targets.row(j);
    }
    return out;
}

MixupResult mixup(const Matrix& x, const Matrix& targets, double beta_a, double beta_b, Rng& rng) {
    if (x.rows() < 2) {
        throw InvalidArgument("mixup: batch size must be >= 2");
    }
    const double lambda = rng.beta(beta_a, beta_b);
    const auto partner = rng.permutation(static_cast<std::size_t>(x.rows()));
    return mixup_with(x, targets, lambda, partner);
}

} // namespace sfda
