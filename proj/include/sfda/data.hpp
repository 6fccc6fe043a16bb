#pragma once

#include "sfda/mathcore.hpp"
#include "sfda/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sfda {

class FeatureView;

/// N feature vectors of dimension d, optionally labeled over C classes.
struct FeatureDataset {
    Matrix features;
    std::optional<std::vector<int>> labels;
    int num_classes = 0;
    std::string domain_name;

    std::size_t size() const noexcept { return static_cast<std::size_t>(features.rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features.cols()); }
    bool labeled() const noexcept { return labels.has_value(); }

    /// Throws InvalidArgument if shapes or labels are inconsistent.
    void validate() const;
    /// Additionally requires labels with every class present.
    void validate_as_source() const;

    /// Labels or InvalidArgument naming `context` when the dataset is unlabeled.
    const std::vector<int>& require_labels(const char* context) const;
    std::vector<std::size_t> class_counts() const;

    /// Label-free view handed to the adaptation path.
    FeatureView unlabeled_view() const;

    bool operator==(const FeatureDataset&) const = default;
};

/// Features of a dataset without any route to its labels. Non-owning: the
/// dataset must outlive the view.
class FeatureView {
public:
    FeatureView(const Matrix& features, int num_classes)
        : features_(&features), num_classes_(num_classes) {}

    const Matrix& features() const noexcept { return *features_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(features_->rows()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(features_->cols()); }
    int num_classes() const noexcept { return num_classes_; }

private:
    const Matrix* features_;
    int num_classes_;
};

/// Rows of `ds` at `indices`, in that order.
FeatureDataset subset(const FeatureDataset& ds, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// TABF binary format
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

std::vector<std::uint8_t> encode_dataset(const FeatureDataset& ds);
FeatureDataset decode_dataset(std::vector<std::uint8_t> bytes);

/// Writes `path` and the sidecar manifest `<path>.json`. Features are stored
/// as float32, so values that are not float-representable are rounded.
void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path);
FeatureDataset load_dataset(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic domain shift
// ---------------------------------------------------------------------------

struct SynthShiftConfig {
    int num_classes = 10;
    int feature_dim = 32;
    int samples_per_class_source = 200;
    int samples_per_class_target = 200;
    double cluster_stddev = 0.25;
    /// Angle applied in each of the floor(d/2) disjoint coordinate planes.
    double rotation_angle = 0.5;
    double translation_scale = 1.0;
    double noise_scale_target = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DomainPair {
    FeatureDataset source;
    FeatureDataset target;
};

/// Source: Gaussian clusters around random unit vectors. Target: the same
/// means rotated plane-wise and translated, with target noise. Values are rounded to float32 so that a
/// generated pair survives save/load unchanged.
DomainPair synth_domain_pair(const SynthShiftConfig& cfg);

// ---------------------------------------------------------------------------
// Splitting and batching
// ---------------------------------------------------------------------------

struct Split {
    FeatureDataset train;
    FeatureDataset val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

/// Stratified split: ceil(fraction * n_c) of each class to train (at least one
/// sample left on each side), the rest to validation.
Split split(const FeatureDataset& ds, double train_fraction, Rng& rng);

struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches;
    std::size_t batch_size = 0;
    bool drop_singletons = false;

    std::size_t num_batches() const noexcept { return batches.size(); }
};

BatchPlan make_batches(std::size_t n, std::size_t batch_size, bool shuffle, bool drop_singletons,
                       Rng& rng);

/// Number of batches make_batches yields for these sizes.
std::size_t batch_count(std::size_t n, std::size_t batch_size, bool drop_singletons);

/// Rows of `x` at `indices`.
Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& indices);

} // namespace sfda
