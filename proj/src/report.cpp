#include "sfda/report.hpp"

#include <cmath>
#include <sstream>

namespace sfda {

namespace {

// NaN (metric not available) becomes null.
Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const OptimConfig& cfg) {
    return {{"momentum", cfg.momentum},   {"weight_decay", cfg.weight_decay},
            {"nesterov", cfg.nesterov},   {"clip_norm", cfg.clip_norm},
            {"use_schedule", cfg.use_schedule}};
}

} // namespace

Json to_json(const SynthShiftConfig& cfg) {
    return {{"num_classes", cfg.num_classes},
            {"feature_dim", cfg.feature_dim},
            {"samples_per_class_source", cfg.samples_per_class_source},
            {"samples_per_class_target", cfg.samples_per_class_target},
            {"cluster_stddev", cfg.cluster_stddev},
            {"rotation_angle", cfg.rotation_angle},
            {"translation_scale", cfg.translation_scale},
            {"noise_scale_target", cfg.noise_scale_target},
            {"seed", cfg.seed}};
}

Json to_json(const SourceTrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr0", cfg.lr0},
            {"label_smoothing", cfg.label_smoothing},
            {"train_fraction", cfg.train_fraction},
            {"hidden_dim", cfg.hidden_dim},
            {"activation", activation_name(cfg.activation)},
            {"optimizer", to_json(cfg.optim)},
            {"seed", cfg.seed}};
}

Json to_json(const FtspConfig& cfg) {
    return {{"k", cfg.k},
            {"classifier", trusted_classifier_name(cfg.classifier)},
            {"mlr_l2_lambda", cfg.mlr_l2_lambda},
            {"mlr_max_iter", cfg.mlr_max_iter},
            {"mlr_grad_tol", cfg.mlr_grad_tol},
            {"lda_shrinkage", cfg.lda_shrinkage},
            {"deletion_frac", cfg.deletion_frac},
            {"rbf_gamma", cfg.spreading.rbf_gamma},
            {"spreading_alpha", cfg.spreading.alpha},
            {"spreading_max_iter", cfg.spreading.max_iter},
            {"spreading_tol", cfg.spreading.tol},
            {"refinement_enabled", cfg.refinement_enabled}};
}

Json to_json(const TsalConfig& cfg) {
    return {{"alpha", cfg.alpha},
            {"smoothing", cfg.smoothing},
            {"tau_dis_start", cfg.tau_dis_start},
            {"tau_dis_end", cfg.tau_dis_end},
            {"tau_div_start", cfg.tau_div_start},
            {"tau_div_end", cfg.tau_div_end},
            {"epochs", cfg.epochs},
            {"detach_target", cfg.detach_target}};
}

Json to_json(const AdaptConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr0", cfg.lr0},
            {"optimizer", to_json(cfg.optim)},
            {"mixup_enabled", cfg.mixup_enabled},
            {"mixup_beta", cfg.mixup_beta},
            {"seed", cfg.seed},
            {"ftsp", to_json(cfg.ftsp)},
            {"tsal", to_json(cfg.tsal)}};
}

Json to_json(const SourceReport& report) {
    Json epochs = Json::array();
    for (const auto& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
    }
    return {{"kind", "source_training"},
            {"train_size", report.train_size},
            {"val_size", report.val_size},
            {"best_epoch", report.best_epoch},
            {"best_val_accuracy", report.best_val_accuracy},
            {"config", to_json(report.config)},
            {"epochs", std::move(epochs)}};
}

Json to_json(const RunReport& report) {
    Json epochs = Json::array();
    for (const auto& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"mean_dis", e.mean_dis},
                          {"mean_div", e.mean_div},
                          {"tau_dis", e.tau_dis},
                          {"tau_div", e.tau_div},
                          {"steps", e.steps},
                          {"spreading_isolated", e.spreading_isolated},
                          {"pseudo_label_accuracy", real_or_null(e.pseudo_label_accuracy)},
                          {"target_accuracy", real_or_null(e.target_accuracy)},
                          {"trusted_precision", real_or_null(e.trusted_precision)}});
    }
    Json final_metrics = {{"total_steps", report.total_steps}, {"final_lr", report.final_lr}};
    final_metrics["target_accuracy"] =
        report.final_target_accuracy ? real_or_null(*report.final_target_accuracy) : Json(nullptr);
    return {{"kind", "adaptation"},
            {"seed", report.seed},
            {"final", std::move(final_metrics)},
            {"config", to_json(report.config)},
            {"epochs", std::move(epochs)}};
}

Json to_json(const EvalMetrics& metrics) {
    Json per_class = Json::array();
    for (double v : metrics.per_class_accuracy) per_class.push_back(real_or_null(v));
    return {{"accuracy", metrics.accuracy}, {"per_class_accuracy", per_class}, {"confusion", metrics.confusion}};
}

Json to_json(const PseudoLabelMetrics& metrics) {
    return {{"pl_accuracy", real_or_null(metrics.pl_accuracy)},
            {"retained_pl_accuracy", real_or_null(metrics.retained_pl_accuracy)},
            {"trusted_precision", real_or_null(metrics.trusted_precision)},
            {"trusted_entries", metrics.trusted_entries}};
}

std::string run_report_csv(const RunReport& report) {
    std::ostringstream out;
    out << "epoch,mean_dis,mean_div,pl_acc,target_acc,trusted_prec\n";
    for (const auto& e : report.epochs) {
        out << e.epoch << ',' << format_real(e.mean_dis) << ',' << format_real(e.mean_div) << ','
            << format_real(e.pseudo_label_accuracy) << ',' << format_real(e.target_accuracy) << ','
            << format_real(e.trusted_precision) << '\n';
    }
    return out.str();
}

std::string schedule_csv(const TsalConfig& cfg) {
    cfg.validate();
    std::ostringstream out;
    out << "epoch,tau_dis,tau_div\n";
    for (std::size_t t = 0; t < cfg.epochs; ++t) {
        out << t << ',' << format_real(tau_dis(t, cfg)) << ',' << format_real(tau_div(t, cfg)) << '\n';
    }
    return out.str();
}

} // namespace sfda
