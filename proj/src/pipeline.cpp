#include "fundus/pipeline.hpp"

#include <chrono>

#include "fundus/errors.hpp"

namespace fundus {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

BinaryMask restrict_to(const BinaryMask& mask, const BoundingBox& box)
{
    BinaryMask out(mask.rows(), mask.cols());
    for (int r = box.row_min; r <= box.row_max; ++r) {
        for (int c = box.col_min; c <= box.col_max; ++c) {
            out.set(r, c, mask(r, c));
        }
    }
    return out;
}

bool on_boundary(const BinaryMask& m, int r, int c)
{
    if (!m(r, c)) {
        return false;
    }
    if (r == 0 || c == 0 || r == m.rows() - 1 || c == m.cols() - 1) {
        return true;
    }
    return !m(r - 1, c) || !m(r + 1, c) || !m(r, c - 1) || !m(r, c + 1);
}

}  // namespace

DiscSegmentation segment_disc(const FundusImage& img, const SegmentationModel& disc_model, const PreprocessConfig& pre)
{
    const Dims net{pre.disc_resolution, pre.disc_resolution};
    const FundusImage conditioned = clahe(resize(img, net), pre.clahe);
    ProbabilityMap probs = disc_model.predict(to_network_input(conditioned));
    const BinaryMask mask = largest_component(binarize(probs));
    if (!mask.any()) {
        throw NoDiscFound();
    }
    return {resize(mask, img.dims(), Interpolation::nearest), std::move(probs)};
}

CupSegmentation segment_cup(const FundusImage& img, const BoundingBox& disc_box, const SegmentationModel& cup_model,
                            const PreprocessConfig& pre)
{
    const Dims frame_dims{pre.cup_frame_resolution, pre.cup_frame_resolution};
    const FundusImage frame = resize(img, frame_dims);
    const BoundingBox box = scale_box(disc_box, img.dims(), frame_dims);
    auto [roi, t] = extract_roi(frame, box, pre.margin_frac, {pre.cup_roi_resolution, pre.cup_roi_resolution});
    const ProbabilityMap probs = cup_model.predict(to_network_input(clahe(roi, pre.clahe)));
    // vessels can split a cup in two, so only speckle is removed
    const BinaryMask local = drop_small_components(binarize(probs), kCupSpeckleFraction);
    const BinaryMask in_frame = map_mask_back(local, t);
    return {resize(in_frame, img.dims(), Interpolation::nearest), t};
}

AssessmentReport assess(const FundusImage& img, const SegmentationModel& disc_model,
                        const SegmentationModel& cup_model, const PreprocessConfig& pre)
{
    const auto start = std::chrono::steady_clock::now();
    AssessmentReport report;
    report.source_id = img.source_id();
    report.disc = segment_disc(img, disc_model, pre).mask;
    report.timings.disc_seconds = seconds_since(start);

    const auto cup_start = std::chrono::steady_clock::now();
    report.disc_box = extract_bbox(report.disc);
    report.cup = restrict_to(segment_cup(img, report.disc_box, cup_model, pre).mask, report.disc_box);
    report.timings.cup_seconds = seconds_since(cup_start);

    report.cdr = cdr(report.disc, report.cup);
    report.glaucoma_suspicious = glaucoma_flag(report.cdr);
    report.timings.total_seconds = seconds_since(start);
    return report;
}

nlohmann::json to_json(const AssessmentReport& r)
{
    return {
        {"id", r.source_id},
        {"status", "ok"},
        {"image_size", {{"rows", r.disc.rows()}, {"cols", r.disc.cols()}}},
        {"disc_box",
         {{"row_min", r.disc_box.row_min},
          {"row_max", r.disc_box.row_max},
          {"col_min", r.disc_box.col_min},
          {"col_max", r.disc_box.col_max}}},
        {"disc_area", r.disc.count()},
        {"cup_area", r.cup.count()},
        {"cdr", r.cdr},
        {"glaucoma_suspicious", r.glaucoma_suspicious},
        {"cdr_threshold", kGlaucomaCdrThreshold},
        {"timings",
         {{"disc_seconds", r.timings.disc_seconds},
          {"cup_seconds", r.timings.cup_seconds},
          {"total_seconds", r.timings.total_seconds}}},
    };
}

nlohmann::json failure_json(const std::string& source_id, const std::string& error)
{
    return {{"id", source_id}, {"status", "failed"}, {"error", error}};
}

FundusImage render_overlay(const FundusImage& img, const BinaryMask& disc, const BinaryMask& cup)
{
    if (disc.dims() != img.dims() || cup.dims() != img.dims()) {
        throw std::invalid_argument("render_overlay: masks must match the image dimensions");
    }
    cv::Mat canvas = img.mat().clone();
    auto draw = [&](const BinaryMask& m, cv::Vec3b colour) {
        for (int r = 0; r < m.rows(); ++r) {
            for (int c = 0; c < m.cols(); ++c) {
                // 3-on / 3-off dash pattern along both axes
                if (on_boundary(m, r, c) && ((r + c) / 3) % 2 == 0) {
                    canvas.at<cv::Vec3b>(r, c) = colour;
                }
            }
        }
    };
    draw(disc, {0, 255, 0});
    draw(cup, {0, 128, 255});
    return {canvas, img.source_id()};
}

UnetPredictor::UnetPredictor(Task task, std::shared_ptr<const SegmentationModel> model, PreprocessConfig pre,
                             std::shared_ptr<const SegmentationModel> disc_model)
    : task_(task), model_(std::move(model)), pre_(pre), disc_model_(std::move(disc_model))
{
    if (!model_) {
        throw std::invalid_argument("UnetPredictor: model is required");
    }
}

BinaryMask UnetPredictor::predict(const Sample& sample) const
{
    if (task_ == Task::disc) {
        try {
            return segment_disc(sample.image, *model_, pre_).mask;
        } catch (const NoDiscFound&) {
            return BinaryMask(sample.image.rows(), sample.image.cols());
        }
    }
    BoundingBox box;
    try {
        box = disc_model_ ? extract_bbox(segment_disc(sample.image, *disc_model_, pre_).mask)
                          : extract_bbox(truth_mask(sample, Task::disc));
    } catch (const NoDiscFound&) {
        return BinaryMask(sample.image.rows(), sample.image.cols());
    }
    return segment_cup(sample.image, box, *model_, pre_).mask;
}

FoldTrainer unet_fold_trainer(const TrainConfig& train_cfg, const ModelConfig& model_cfg, const PreprocessConfig& pre,
                              FoldObserver observer)
{
    return [=](std::span<const Sample> train_set, int fold) -> std::unique_ptr<MaskPredictor> {
        TrainConfig cfg = train_cfg;
        cfg.seed = train_cfg.seed + static_cast<std::uint64_t>(fold);
        const auto examples = stage_examples(train_set, cfg.task, pre);
        TrainResult result = train_model(examples, cfg, model_cfg, pre);
        if (observer) {
            observer(fold, result);
        }
        auto model = std::make_shared<const SegmentationModel>(std::move(result.model));
        return std::make_unique<UnetPredictor>(cfg.task, std::move(model), pre);
    };
}

}  // namespace fundus
