#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "fundus/metrics.hpp"
#include "fundus/model.hpp"
#include "fundus/preprocess.hpp"
#include "fundus/train.hpp"

namespace fundus {

struct DiscSegmentation {
    BinaryMask mask;                // source frame, largest component only
    ProbabilityMap probabilities;  // network resolution
};

/// resize to the disc resolution -> CLAHE -> forward -> binarize -> largest component -> nearest
/// resize back to the source frame. Throws NoDiscFound when nothing is segmented.
DiscSegmentation segment_disc(const FundusImage& img, const SegmentationModel& disc_model,
                              const PreprocessConfig& pre = {});

struct CupSegmentation {
    BinaryMask mask;          // source frame, zero outside the margin-expanded disc box
    CropTransform transform;  // cup-stage frame <-> region of interest
};

/// Cup components smaller than this fraction of the largest one are discarded.
inline constexpr double kCupSpeckleFraction = 0.1;

/// resize to the cup frame -> scale the disc box -> crop with margin -> bilinear resize of the ROI
/// -> CLAHE -> forward -> binarize -> drop speckle -> map back to the source frame.
CupSegmentation segment_cup(const FundusImage& img, const BoundingBox& disc_box, const SegmentationModel& cup_model,
                            const PreprocessConfig& pre = {});

struct StageTimings {
    double disc_seconds = 0.0;
    double cup_seconds = 0.0;
    double total_seconds = 0.0;
};

struct AssessmentReport {
    std::string source_id;
    BinaryMask disc;
    BinaryMask cup;  // restricted to disc_box
    BoundingBox disc_box;
    double cdr = 0.0;
    bool glaucoma_suspicious = false;
    StageTimings timings;
};

/// segment_disc -> extract_bbox -> segment_cup -> cdr -> glaucoma_flag.
AssessmentReport assess(const FundusImage& img, const SegmentationModel& disc_model,
                        const SegmentationModel& cup_model, const PreprocessConfig& pre = {});

nlohmann::json to_json(const AssessmentReport& report);
nlohmann::json failure_json(const std::string& source_id, const std::string& error);

/// Fundus image with the disc boundary (green) and cup boundary (blue) drawn as 1-px dashes.
FundusImage render_overlay(const FundusImage& img, const BinaryMask& disc, const BinaryMask& cup);

/// Predicts full-frame masks with a trained network. A cup predictor crops by the groundtruth
/// disc box unless a disc model is supplied, in which case the predicted box is used.
class UnetPredictor : public MaskPredictor {
public:
    UnetPredictor(Task task, std::shared_ptr<const SegmentationModel> model, PreprocessConfig pre,
                  std::shared_ptr<const SegmentationModel> disc_model = nullptr);

    [[nodiscard]] BinaryMask predict(const Sample& sample) const override;
    [[nodiscard]] const SegmentationModel& model() const { return *model_; }

private:
    Task task_;
    std::shared_ptr<const SegmentationModel> model_;
    PreprocessConfig pre_;
    std::shared_ptr<const SegmentationModel> disc_model_;
};

using FoldObserver = std::function<void(int fold, const TrainResult& result)>;

/// Trains one network per fold through train_model (seed offset by the fold index).
FoldTrainer unet_fold_trainer(const TrainConfig& train_cfg, const ModelConfig& model_cfg, const PreprocessConfig& pre,
                              FoldObserver observer = {});

}  // namespace fundus
