#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fundus/metrics.hpp"
#include "fundus/tensor.hpp"

namespace fundus {

/// Constant-width U-Net hyperparameters.
struct ModelConfig {
    int input_rows = 256;
    int input_cols = 256;
    int input_channels = 3;
    int filters = 64;  // same count at every depth
    int depth = 4;     // number of max-pool stages
    double dropout = 0.2;
    int kernel = 3;

    void validate() const;
    /// Rejects spatial dimensions not divisible by 2^depth.
    void validate_input(int rows, int cols, int channels) const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string describe(const ModelConfig& cfg);

struct ParameterArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

/// One gradient buffer per parameter array, in parameter order.
using ParameterGradients = std::vector<std::vector<float>>;

struct ForwardTape;

class SegmentationModel;

/// A training-mode forward pass holding the activations needed for backprop.
class TrainingPass {
public:
    TrainingPass(TrainingPass&&) noexcept;
    TrainingPass& operator=(TrainingPass&&) noexcept;
    ~TrainingPass();

    [[nodiscard]] const ProbabilityMap& output() const { return output_; }
    /// Gradients of a scalar loss, given its derivative with respect to output().
    [[nodiscard]] ParameterGradients backward(const RealGrid& grad_output) const;

private:
    friend class SegmentationModel;
    TrainingPass(const SegmentationModel& model, std::unique_ptr<ForwardTape> tape, ProbabilityMap output);

    const SegmentationModel* model_;
    std::unique_ptr<ForwardTape> tape_;
    ProbabilityMap output_;
};

/// Contracting path of [conv3x3 -> dropout -> ReLU] x2 -> maxpool stages, a bottleneck double conv,
/// an expansive path of upsample -> concat skip -> double conv stages, then 1x1 conv + sigmoid.
class SegmentationModel {
public:
    explicit SegmentationModel(const ModelConfig& cfg, std::uint64_t init_seed = 0);

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] const std::vector<ParameterArray>& parameters() const { return params_; }
    [[nodiscard]] std::vector<ParameterArray>& mutable_parameters() { return params_; }

    /// Inference: dropout disabled, no state mutated; safe to call concurrently.
    [[nodiscard]] ProbabilityMap predict(const Tensor& input) const;
    /// Training mode: dropout active, draws from `rng`.
    [[nodiscard]] TrainingPass forward_train(const Tensor& input, std::mt19937_64& rng) const;

    [[nodiscard]] ParameterGradients zero_gradients() const;

private:
    friend class TrainingPass;

    struct Conv {
        int in_channels;
        int out_channels;
        int kernel;
        std::size_t weight;  // index into params_; bias follows at weight + 1
    };

    void add_conv(const std::string& name, int in_channels, int out_channels, int kernel, std::mt19937_64& rng);
    ProbabilityMap run(const Tensor& input, ForwardTape* tape, std::mt19937_64* rng) const;
    ParameterGradients backprop(const ForwardTape& tape, const RealGrid& grad_output) const;

    ModelConfig config_;
    std::vector<ParameterArray> params_;
    std::vector<Conv> units_;  // encoder, bottleneck, decoder convs in forward order
    Conv head_{};
};

std::size_t count_parameters(const SegmentationModel& model);

inline constexpr char kWeightFileMagic[8] = {'F', 'U', 'N', 'D', 'U', 'S', 'N', 'N'};
inline constexpr std::uint32_t kWeightFileVersion = 1;

/// Little-endian: magic, version, config, then each parameter array as
/// (name length, name, rank, dims, element count, float32 values) in parameters() order.
void save_weights(const SegmentationModel& model, const std::filesystem::path& path);
/// Rejects files whose stored config differs from `cfg`.
SegmentationModel load_weights(const ModelConfig& cfg, const std::filesystem::path& path);
/// Uses the config stored in the file.
SegmentationModel load_weights(const std::filesystem::path& path);
ModelConfig read_weight_config(const std::filesystem::path& path);

}  // namespace fundus
