#pragma once

#include "sfda/mathcore.hpp"
#include "sfda/types.hpp"

#include <cstddef>
#include <vector>

namespace sfda {

struct TsalConfig {
    /// Weight of the smoothed pseudo-label inside the mixture target.
    double alpha = 0.3;
    double smoothing = 0.1;
    double tau_dis_start = 1.0;
    double tau_dis_end = 1.5;
    double tau_div_start = 0.5;
    double tau_div_end = 1.0;
    std::size_t epochs = 15;
    /// Treat the mixture target as a constant when differentiating.
    bool detach_target = true;

    void validate() const;
};

/// Linear ramp over epochs 0..E-1; returns the start value when E == 1.
double tau_dis(std::size_t epoch, const TsalConfig& cfg);
double tau_div(std::size_t epoch, const TsalConfig& cfg);

/// one_hot * (1 - S) + S / C. Throws unless the input is exactly one-hot.
std::vector<double> smooth_labels(std::span<const double> one_hot, double smoothing);

/// Smoothed one-hot rows for integer labels.
Matrix smoothed_label_matrix(const std::vector<int>& labels, std::size_t num_classes, double smoothing);

/// softmax(logits / tau_dis(t)) + alpha * y_smooth, total mass 1 + alpha.
std::vector<double> target_distribution(std::span<const double> logits, std::span<const double> y_smooth,
                                        std::size_t epoch, const TsalConfig& cfg);

struct TsalBatchResult {
    double loss = 0.0;
    double dis = 0.0;
    double div = 0.0;
    Matrix dloss_dlogits;
    ProbVector p_bar;
};

/// Loss on one batch with one-hot pseudo-labels; smoothing is applied here.
TsalBatchResult tsal_batch(const Matrix& logits, const Matrix& pseudo_onehots, std::size_t epoch,
                           const TsalConfig& cfg);

/// Same loss for targets that are already smoothed (and possibly mixed),
/// rows summing to one. Used on MixUp batches.
TsalBatchResult tsal_batch_soft(const Matrix& logits, const Matrix& smoothed_targets, std::size_t epoch,
                                const TsalConfig& cfg);

struct MixupResult {
    Matrix features;
    Matrix targets;
    double lambda = 1.0;
    std::vector<std::size_t> partner;
};

/// One lambda ~ Beta(a, b) per batch and a seeded pairing permutation.
MixupResult mixup(const Matrix& x, const Matrix& targets, double beta_a, double beta_b, Rng& rng);

/// Mix with an explicit ratio and pairing.
MixupResult mixup_with(const Matrix& x, const Matrix& targets, double lambda,
                       const std::vector<std::size_t>& partner);

} // namespace sfda
