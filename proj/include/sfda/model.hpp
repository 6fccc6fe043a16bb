#pragma once

#include "sfda/mathcore.hpp"
#include "sfda/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace sfda {

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1 };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Trainable affine adapter (d -> h) followed by a linear classifier (h -> C).
struct AdapterClassifier {
    Matrix adapter_weight;    // h x d
    Vector adapter_bias;      // h
    Matrix classifier_weight; // C x h
    Vector classifier_bias;   // C
    Activation activation = Activation::Identity;
    bool classifier_frozen = false;
    /// Bumped by every optimizer step; caches remember the revision they saw.
    std::uint64_t revision = 0;

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(adapter_weight.cols()); }
    std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(adapter_weight.rows()); }
    std::size_t num_classes() const noexcept { return static_cast<std::size_t>(classifier_weight.rows()); }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.
    static AdapterClassifier create(std::size_t input_dim, std::size_t hidden_dim,
                                    std::size_t num_classes, Activation activation, Rng& rng);

    /// Throws InvalidArgument when the parameter shapes disagree.
    void validate() const;

    /// Parameters compared exactly; revision is bookkeeping and ignored.
    bool same_parameters(const AdapterClassifier& other) const;
};

struct ForwardCache {
    Matrix input;
    Matrix pre_activation;
    Matrix features;
    std::uint64_t revision = 0;
};

struct ForwardResult {
    Matrix features; // B x h, adapter output
    Matrix logits;   // B x C
    ForwardCache cache;
};

ForwardResult forward(const AdapterClassifier& m, const Matrix& x);

/// Gradient of a scalar loss with respect to every parameter.
struct ParamGrads {
    Matrix adapter_weight;
    Vector adapter_bias;
    Matrix classifier_weight;
    Vector classifier_bias;

    static ParamGrads zeros_like(const AdapterClassifier& m);
    /// Global L2 norm; the classifier block is skipped when `include_classifier` is false.
    double norm(bool include_classifier = true) const;
    void scale(double s);
};

/// Chain rule from dL/dlogits (the gradient of a scalar batch loss, batch
/// averaging already applied by the loss) to the parameters. The classifier
/// block is zero when the classifier is frozen.
/// Throws ContractError if the cache does not belong to the current model state.
ParamGrads backward(const AdapterClassifier& m, const ForwardCache& cache, const Matrix& dloss_dlogits);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// lr0 * (1 + 10 t / T)^-0.75
double lr_at(std::size_t t, std::size_t total_steps, double lr0);

struct OptimConfig {
    double lr0 = 1e-2;
    double momentum = 0.9;
    double weight_decay = 1e-3;
    bool nesterov = true;
    double clip_norm = 5.0;
    /// When false the learning rate stays at lr0 for every step.
    bool use_schedule = true;
};

struct OptimState {
    OptimConfig config;
    ParamGrads velocity;
    std::size_t step = 0;
    std::size_t total_steps = 1;
    double last_lr = 0.0;
    double last_grad_norm = 0.0;    // after weight decay, before clipping
    double last_applied_norm = 0.0; // after clipping

    static OptimState create(const AdapterClassifier& m, const OptimConfig& cfg, std::size_t total_steps);
};

/// Weight decay, global-norm clipping and (Nesterov) momentum, in that order,
/// over the non-frozen parameter groups. Throws ContractError past the last step.
void sgd_step(AdapterClassifier& m, OptimState& opt, const ParamGrads& grads);

// ---------------------------------------------------------------------------
// TABM checkpoint
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
/// Byte length of the fixed header preceding the parameter payload.
inline constexpr std::size_t kCheckpointHeaderBytes = 24;

std::vector<std::uint8_t> encode_checkpoint(const AdapterClassifier& m);
AdapterClassifier decode_checkpoint(std::vector<std::uint8_t> bytes);

void save_checkpoint(const AdapterClassifier& m, const std::filesystem::path& path);
AdapterClassifier load_checkpoint(const std::filesystem::path& path);

} // namespace sfda
