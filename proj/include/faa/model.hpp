#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "faa/data.hpp"
#include "faa/network.hpp"
#include "faa/policy.hpp"

namespace faa {

/// Trained (or initial) probe-classifier weights plus the number of SGD
/// steps taken to reach them.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(Weights<float> weights, std::uint64_t step = 0);

    /// He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
    static ModelParams initialize(const Architecture& arch, std::uint64_t seed);
    static ModelParams zeros(const Architecture& arch);

    const Architecture& architecture() const noexcept { return weights_.arch; }
    const Weights<float>& weights() const noexcept { return weights_; }
    Weights<float>& weights() noexcept { return weights_; }
    std::uint64_t step() const noexcept { return step_; }

    /// FNV-1a over the architecture, step counter and weight bytes.
    std::uint64_t hash() const;
    bool all_finite() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    Weights<float> weights_;
    std::uint64_t step_ = 0;
};

Architecture architecture_for(const Dataset& dataset);

struct TrainConfig {
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    /// When set, each image of each epoch receives one sub-policy drawn
    /// uniformly from the flattened pool.
    std::optional<PolicySet> augmentation;
    /// Random 2-pixel-padded crop plus horizontal flip, applied after the policy.
    bool baseline_augment = false;
};

struct TrainLog {
    double initial_loss = 0.0;
    /// Mean minibatch loss per epoch.
    std::vector<double> epoch_losses;
    /// Loss over the (un-augmented) training set after the last epoch.
    double final_loss = 0.0;
};

/// Minibatch SGD with momentum from `init`. Deterministic in cfg.seed: weight
/// order, minibatch order and augmentation draw from separate derived
/// streams. Throws TrainingDiverged on a non-finite loss, std::invalid_argument
/// for an empty dataset or mismatched shapes/classes.
ModelParams train(const ModelParams& init, const Dataset& dataset, const TrainConfig& cfg, TrainLog* log = nullptr);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

/// Mean cross-entropy and argmax accuracy (ties go to the lowest class) in a
/// single pass. Does not modify the parameters. Throws std::invalid_argument
/// for an empty source.
Evaluation evaluate(const ModelParams& params, const ImageSource& source, std::size_t batch_size = 128);

double loss(const ModelParams& params, const ImageSource& source);
double loss(const ModelParams& params, const Dataset& dataset);
double accuracy(const ModelParams& params, const ImageSource& source);
double accuracy(const ModelParams& params, const Dataset& dataset);

/// Softmax class probabilities for one image.
std::vector<double> predict(const ModelParams& params, const Image& img);

/// Binary checkpoint: "FAAM", u32 version, 8 x u32 architecture fields,
/// u64 step, u32 tensor count, then per tensor a u32 element count and
/// little-endian float32 data.
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace faa
