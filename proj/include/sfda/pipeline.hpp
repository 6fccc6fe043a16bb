#pragma once

#include "sfda/data.hpp"
#include "sfda/ftsp.hpp"
#include "sfda/model.hpp"
#include "sfda/tsal.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace sfda {

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalMetrics {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy; // NaN for classes without samples
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
};

std::vector<int> predict(const AdapterClassifier& model, const Matrix& x);

/// Throws InvalidArgument for an unlabeled dataset.
EvalMetrics evaluate(const AdapterClassifier& model, const FeatureDataset& ds);
EvalMetrics evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 std::size_t num_classes);

struct PseudoLabelMetrics {
    double pl_accuracy = 0.0;
    double retained_pl_accuracy = 0.0;
    double trusted_precision = 0.0;
    std::size_t trusted_entries = 0;
};

PseudoLabelMetrics pseudo_label_metrics(const PseudoLabelSet& pls, const std::vector<int>& true_labels);

// ---------------------------------------------------------------------------
// Stage 1: source fine-tuning
// ---------------------------------------------------------------------------

struct SourceTrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double lr0 = 1e-2;
    double label_smoothing = 0.1;
    double train_fraction = 0.85;
    std::size_t hidden_dim = 256;
    Activation activation = Activation::Identity;
    OptimConfig optim;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SourceEpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct SourceReport {
    std::vector<SourceEpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
    SourceTrainConfig config;
};

/// Keeps the model with the highest validation accuracy; the earliest wins ties.
class BestCheckpoint {
public:
    /// Returns true when `model` became the new best.
    bool offer(std::size_t epoch, double val_accuracy, const AdapterClassifier& model);

    bool has_value() const noexcept { return model_.has_value(); }
    std::size_t epoch() const noexcept { return epoch_; }
    double accuracy() const noexcept { return accuracy_; }
    const AdapterClassifier& model() const { return *model_; }

private:
    std::optional<AdapterClassifier> model_;
    std::size_t epoch_ = 0;
    double accuracy_ = -1.0;
};

struct SourceTrainResult {
    AdapterClassifier model;
    SourceReport report;
};

SourceTrainResult train_source(const SourceTrainConfig& cfg, const FeatureDataset& source);

// ---------------------------------------------------------------------------
// Stage 2: target adaptation
// ---------------------------------------------------------------------------

struct AdaptConfig {
    std::size_t epochs = 15;
    std::size_t batch_size = 64;
    double lr0 = 1e-2;
    OptimConfig optim;
    FtspConfig ftsp;
    TsalConfig tsal;
    bool mixup_enabled = true;
    double mixup_beta = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Label-dependent numbers for one epoch, produced outside the adaptation path.
struct EpochMetrics {
    double pseudo_label_accuracy;
    double target_accuracy;
    double trusted_precision;
};

/// Called once per epoch with that epoch's pseudo-labels and the model at the
/// end of the epoch. Adaptation itself never sees target labels.
using EpochMonitor = std::function<EpochMetrics(const PseudoLabelSet&, const AdapterClassifier&)>;

/// Monitor that scores against the labels of `target`; `target` must outlive it.
EpochMonitor make_label_monitor(const FeatureDataset& target);

struct AdaptEpochRecord {
    std::size_t epoch = 0;
    double mean_dis = 0.0;
    double mean_div = 0.0;
    double tau_dis = 0.0;
    double tau_div = 0.0;
    std::size_t steps = 0;
    std::size_t spreading_isolated = 0;
    /// NaN when no monitor was attached.
    double pseudo_label_accuracy;
    double target_accuracy;
    double trusted_precision;
};

struct RunReport {
    std::vector<AdaptEpochRecord> epochs;
    std::size_t total_steps = 0;
    double final_lr = 0.0;
    std::optional<double> final_target_accuracy;
    AdaptConfig config;
    std::uint64_t seed = 0;
};

struct AdaptResult {
    AdapterClassifier model;
    RunReport report;
};

/// Freezes the classifier, then per epoch: pseudo-label the target through the
/// current adapter, and minimize the temperature-scaled loss over shuffled batches.
/// The final-epoch model is returned.
AdaptResult adapt(const AdaptConfig& cfg, const AdapterClassifier& source_model, const FeatureView& target,
                  const EpochMonitor& monitor = {});

} // namespace sfda
