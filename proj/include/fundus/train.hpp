#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fundus/augment.hpp"
#include "fundus/data.hpp"
#include "fundus/model.hpp"
#include "fundus/preprocess.hpp"

namespace fundus {

enum class Task { disc, cup };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct TrainConfig {
    Task task = Task::disc;
    double learning_rate = 1e-3;
    double momentum = 0.95;
    int batch_size = 1;
    int max_epochs = 382;
    int patience = 50;
    double validation_fraction = 0.1;
    bool augment = true;
    AugmentParams augmentation;
    double box_jitter = 0.05;  // cup only: per-side jitter of the training crop, as a fraction of the box side
    std::uint64_t seed = 0;

    /// 1e-3 for disc, 3e-4 for cup; everything else shared.
    [[nodiscard]] static TrainConfig defaults_for(Task task);
    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_soft_dice = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;  // index into epochs with minimum validation loss
};

/// One history record as a single JSON line.
std::string to_json_line(const EpochRecord& record);
void write_history(const TrainHistory& history, const std::filesystem::path& path);

struct FoldSplit {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<std::string> ids;
    std::vector<int> fold_of;  // parallel to ids

    [[nodiscard]] std::vector<std::size_t> members(int fold) const;
    [[nodiscard]] std::vector<int> sizes() const;
};

FoldSplit kfold_split(std::span<const std::string> ids, int k = 5, std::uint64_t seed = 0);

/// v <- momentum * v - lr * g ; w <- w + v, per parameter array.
void sgd_momentum_step(std::vector<ParameterArray>& params, const ParameterGradients& grads,
                       ParameterGradients& velocity, double lr, double momentum);

/// A sample conditioned for one task at its staging resolution. Disc examples hold the
/// CLAHE-equalized network-resolution image; cup examples hold the cup-stage frame and the disc box
/// within it, and are cropped per draw.
struct TrainingExample {
    std::string id;
    FundusImage image;
    BinaryMask mask;
    std::optional<BoundingBox> roi;
};

std::vector<TrainingExample> stage_examples(std::span<const Sample> samples, Task task, const PreprocessConfig& pre);

struct NetworkExample {
    Tensor input;
    BinaryMask target;
};

/// Builds a network input/target pair. With `rng` set, applies box jitter (cup) and augmentation
/// per `cfg`; without it the result is deterministic.
NetworkExample materialize(const TrainingExample& ex, const TrainConfig& cfg, const PreprocessConfig& pre,
                           std::mt19937_64* rng);

struct TrainResult {
    SegmentationModel model;
    TrainHistory history;
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;  // empty when validation ran on the training set
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled single-example SGD with on-the-fly augmentation, validation-loss early stopping,
/// and best-weight restoration. A validation fraction that selects no example validates on the
/// training set instead.
TrainResult train_model(std::span<const TrainingExample> examples, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const PreprocessConfig& pre, const EpochCallback& on_epoch = {});

class MaskPredictor {
public:
    virtual ~MaskPredictor() = default;
    /// Full-frame binary prediction for the configured task.
    [[nodiscard]] virtual BinaryMask predict(const Sample& sample) const = 0;
};

using FoldTrainer = std::function<std::unique_ptr<MaskPredictor>(std::span<const Sample> train_set, int fold)>;

struct CrossValidationReport {
    std::vector<ScoreReport> folds;
    double iou = 0.0;  // mean of fold means
    double dice = 0.0;
};

CrossValidationReport aggregate_folds(std::vector<ScoreReport> folds);
CrossValidationReport cross_validate(std::span<const Sample> samples, Task task, const FoldSplit& split,
                                     const FoldTrainer& trainer);

/// `fold,iou,dice` rows for each fold then a `mean` row.
void write_fold_scores(const CrossValidationReport& report, const std::filesystem::path& path);

const BinaryMask& truth_mask(const Sample& sample, Task task);

}  // namespace fundus
