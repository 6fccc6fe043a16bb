#pragma once

#include "sfda/model.hpp"
#include "sfda/types.hpp"

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace sfda {

/// Few-trusted-samples pseudo-labeling: pick the K most confident target
/// samples per class, train a small classifier on them, label everything,
/// then optionally drop uncertain labels and refill them by label spreading.

enum class TrustedClassifierKind : std::uint8_t { Mlr, Lda };

const char* trusted_classifier_name(TrustedClassifierKind k);
TrustedClassifierKind parse_trusted_classifier(const std::string& name);

struct SpreadingConfig {
    double rbf_gamma = 20.0;
    double alpha = 0.2;
    std::size_t max_iter = 30;
    double tol = 1e-3;
};

struct FtspConfig {
    std::size_t k = 3;
    TrustedClassifierKind classifier = TrustedClassifierKind::Mlr;
    double mlr_l2_lambda = 1e-3;
    std::size_t mlr_max_iter = 1000;
    double mlr_grad_tol = 1e-6;
    double lda_shrinkage = 0.99;
    double deletion_frac = 0.20;
    SpreadingConfig spreading;
    bool refinement_enabled = true;

    void validate() const;
};

struct TrustedEntry {
    std::size_t index;
    double probability;
};

/// K entries per class, most confident first. A sample may be trusted for
/// several classes at once.
struct TrustedSet {
    std::vector<std::vector<TrustedEntry>> per_class;

    std::size_t num_classes() const noexcept { return per_class.size(); }
    std::size_t total_entries() const;
};

TrustedSet select_trusted(const Matrix& probs, std::size_t k);

struct TrustedDataset {
    Matrix features;       // (K*C) x h, rows L2-normalized
    std::vector<int> labels;
};

TrustedDataset build_trusted_dataset(const Matrix& target_features, const TrustedSet& ts);

/// Linear scorer over L2-normalized features.
struct TrustedClassifier {
    TrustedClassifierKind kind = TrustedClassifierKind::Mlr;
    Matrix weight; // C x h
    Vector bias;   // C

    Matrix scores(const Matrix& normalized_features) const;
};

struct MlrFit {
    TrustedClassifier classifier;
    /// Objective value after every accepted step, starting from the initial point.
    std::vector<double> objective_trace;
    std::size_t iterations = 0;
    double final_grad_norm = 0.0;
};

/// Objective mean CE + (lambda / 2) ||W||^2 (bias unregularized) and its gradient.
struct MlrObjective {
    double value;
    Matrix grad_weight;
    Vector grad_bias;
};
MlrObjective mlr_objective(const Matrix& x, const std::vector<int>& y, std::size_t num_classes,
                           const Matrix& weight, const Vector& bias, double l2_lambda);

/// Full-batch gradient descent from zero: step 1.0, halved until the objective decreases.
MlrFit fit_mlr(const Matrix& x, const std::vector<int>& y, std::size_t num_classes, double l2_lambda,
               std::size_t max_iter = 1000, double grad_tol = 1e-6);

/// LDA with covariance shrunk toward a scaled identity; uniform priors.
TrustedClassifier fit_lda(const Matrix& x, const std::vector<int>& y, std::size_t num_classes,
                          double shrinkage);

struct PseudoInference {
    Matrix probs;            // N x C
    std::vector<int> labels; // row argmax
};

/// Re-normalizes rows, then softmax of the linear scores at temperature 1.
PseudoInference infer_pseudo(const TrustedClassifier& tc, const Matrix& target_features);

/// Within each pseudo-class drop the floor(frac * n_c) least confident
/// samples; ties drop the larger index first.
std::vector<bool> delete_uncertain(const Matrix& probs, const std::vector<int>& labels,
                                   double deletion_frac);

struct SpreadingResult {
    std::vector<int> labels;
    Matrix scores;                // raw F
    std::vector<bool> isolated;   // row of F ended all-zero
    std::size_t iterations = 0;
};

/// Dense label spreading on an RBF graph. Rows with `retained` set seed the
/// propagation with `labels`; a sample whose score row stays all-zero keeps
/// its entry from `labels`. Throws above kMaxSpreadingSamples.
SpreadingResult label_spreading(const Matrix& features, const std::vector<int>& labels,
                                const std::vector<bool>& retained, std::size_t num_classes,
                                const SpreadingConfig& cfg);

inline constexpr std::size_t kMaxSpreadingSamples = 20000;

/// Normalized affinity S = D^-1/2 W D^-1/2; exposed for closed-form checks.
Matrix spreading_affinity(const Matrix& features, double rbf_gamma);

enum class LabelStage : std::uint8_t { TrustedClassifier, Spreading };
const char* label_stage_name(LabelStage s);

struct PseudoLabelSet {
    std::vector<int> labels;
    std::vector<double> confidence;
    std::vector<bool> retained;
    std::vector<LabelStage> stage;
    /// Labels before refinement.
    std::vector<int> classifier_labels;
    TrustedSet trusted;
    std::size_t isolated_count = 0;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

/// One full pseudo-labeling pass through the current adapter.
PseudoLabelSet ftsp_pipeline(const AdapterClassifier& model, const Matrix& target_features_raw,
                             const FtspConfig& cfg);

/// `index,label,confidence,retained,stage` with one row per sample.
void write_pseudo_label_csv(std::ostream& out, const PseudoLabelSet& pls);

} // namespace sfda
