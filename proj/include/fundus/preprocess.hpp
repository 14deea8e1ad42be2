#pragma once

#include <string>
#include <utility>

#include <opencv2/core.hpp>

#include "fundus/errors.hpp"
#include "fundus/metrics.hpp"
#include "fundus/raster.hpp"

namespace fundus {

/// 8-bit RGB raster (channel order R, G, B) with an opaque source identifier.
class FundusImage {
public:
    FundusImage() = default;
    /// `rgb` must be CV_8UC3 in RGB order; it is deep-copied.
    FundusImage(const cv::Mat& rgb, std::string source_id = {});
    FundusImage(int rows, int cols, cv::Scalar fill, std::string source_id = {});

    [[nodiscard]] int rows() const { return pixels_.rows; }
    [[nodiscard]] int cols() const { return pixels_.cols; }
    [[nodiscard]] Dims dims() const { return {pixels_.rows, pixels_.cols}; }
    [[nodiscard]] bool empty() const { return pixels_.empty(); }
    [[nodiscard]] const cv::Mat& mat() const { return pixels_; }
    [[nodiscard]] const std::string& source_id() const { return source_id_; }
    void set_source_id(std::string id) { source_id_ = std::move(id); }

    [[nodiscard]] bool identical(const FundusImage& other) const;

private:
    cv::Mat pixels_;
    std::string source_id_;
};

/// Inclusive pixel rectangle.
struct BoundingBox {
    int row_min = 0;
    int row_max = 0;
    int col_min = 0;
    int col_max = 0;

    [[nodiscard]] int height() const { return row_max - row_min + 1; }
    [[nodiscard]] int width() const { return col_max - col_min + 1; }
    [[nodiscard]] bool contains(int r, int c) const { return r >= row_min && r <= row_max && c >= col_min && c <= col_max; }
    [[nodiscard]] bool within(Dims d) const;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class Interpolation { nearest, bilinear };

/// Maps between a full frame and a (possibly resized) crop of it.
struct CropTransform {
    Dims source;
    BoundingBox region;  // clamped, expanded crop rectangle in source coordinates
    Dims output;         // raster size after the crop was resized
    Interpolation interpolation = Interpolation::bilinear;
};

struct ClaheParams {
    double clip_limit = 2.0;
    int tile_rows = 8;
    int tile_cols = 8;
};

/// Stage geometry shared by training and inference.
struct PreprocessConfig {
    int disc_resolution = 256;
    int cup_frame_resolution = 512;
    int cup_roi_resolution = 128;
    double margin_frac = 0.2;
    ClaheParams clahe;
};

/// Contrast-limited adaptive histogram equalization on the L* channel of CIE L*a*b*.
FundusImage clahe(const FundusImage& img, const ClaheParams& params = {});

FundusImage resize(const FundusImage& img, Dims target, Interpolation mode = Interpolation::bilinear);
BinaryMask resize(const BinaryMask& mask, Dims target, Interpolation mode = Interpolation::nearest);

BinaryMask largest_component(const BinaryMask& mask);
/// Keeps every 4-connected component whose area is at least `min_fraction` of the largest one.
BinaryMask drop_small_components(const BinaryMask& mask, double min_fraction);
BoundingBox bounding_box(const BinaryMask& mask);
/// Tight box of the largest 4-connected component. Throws NoDiscFound on an empty mask.
BoundingBox extract_bbox(const BinaryMask& mask);

BoundingBox expand_box(const BoundingBox& box, double margin_frac, Dims bounds);
std::pair<FundusImage, CropTransform> crop_with_margin(const FundusImage& img, const BoundingBox& box,
                                                       double margin_frac);
BinaryMask crop(const BinaryMask& mask, const BoundingBox& region);
BinaryMask map_mask_back(const BinaryMask& mask, const CropTransform& t);

/// Rescales an inclusive box between two frame sizes; rejects boxes that collapse.
BoundingBox scale_box(const BoundingBox& box, Dims from, Dims to);

/// Crop + resize of a cup region of interest, shared by training and inference.
std::pair<FundusImage, CropTransform> extract_roi(const FundusImage& frame, const BoundingBox& box, double margin_frac,
                                                  Dims roi_dims);

cv::Mat mask_to_mat(const BinaryMask& mask);  // CV_8U, foreground 255
BinaryMask mat_to_mask(const cv::Mat& gray);  // threshold at 128

}  // namespace fundus
