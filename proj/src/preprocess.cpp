#include "fundus/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <opencv2/imgproc.hpp>

namespace fundus {

FundusImage::FundusImage(const cv::Mat& rgb, std::string source_id) : source_id_(std::move(source_id))
{
    if (rgb.type() != CV_8UC3) {
        throw std::invalid_argument("FundusImage: expected an 8-bit 3-channel raster");
    }
    if (rgb.rows < 1 || rgb.cols < 1) {
        throw std::invalid_argument("FundusImage: empty raster");
    }
    pixels_ = rgb.clone();
}

FundusImage::FundusImage(int rows, int cols, cv::Scalar fill, std::string source_id)
    : FundusImage(cv::Mat(rows, cols, CV_8UC3, fill), std::move(source_id))
{
}

bool FundusImage::identical(const FundusImage& other) const
{
    if (dims() != other.dims()) {
        return false;
    }
    if (empty()) {
        return true;
    }
    return cv::countNonZero(pixels_.reshape(1) != other.pixels_.reshape(1)) == 0;
}

bool BoundingBox::within(Dims d) const
{
    return row_min >= 0 && col_min >= 0 && row_min <= row_max && col_min <= col_max && row_max < d.rows &&
           col_max < d.cols;
}

FundusImage clahe(const FundusImage& img, const ClaheParams& params)
{
    if (!(params.clip_limit > 0.0)) {
        throw std::invalid_argument("clahe: clip limit must be positive");
    }
    if (params.tile_rows < 1 || params.tile_cols < 1) {
        throw std::invalid_argument("clahe: tile grid must be at least 1x1");
    }
    if (img.empty() || img.rows() < params.tile_rows || img.cols() < params.tile_cols) {
        throw std::invalid_argument("clahe: image " + to_string(img.dims()) + " is smaller than the tile grid");
    }
    cv::Mat lab;
    cv::cvtColor(img.mat(), lab, cv::COLOR_RGB2Lab);
    cv::Mat channels[3];
    cv::split(lab, channels);
    double lo = 0.0;
    double hi = 0.0;
    cv::minMaxLoc(channels[0], &lo, &hi);
    if (lo == hi) {
        // clipped redistribution would shift a flat histogram; nothing to equalize
        return img;
    }
    auto equalizer = cv::createCLAHE(params.clip_limit, cv::Size(params.tile_cols, params.tile_rows));
    cv::Mat lightness;
    equalizer->apply(channels[0], lightness);
    channels[0] = lightness;
    cv::merge(channels, 3, lab);
    cv::Mat rgb;
    cv::cvtColor(lab, rgb, cv::COLOR_Lab2RGB);
    return {rgb, img.source_id()};
}

FundusImage resize(const FundusImage& img, Dims target, Interpolation mode)
{
    if (target.rows < 1 || target.cols < 1) {
        throw std::invalid_argument("resize: target must be at least 1x1");
    }
    if (img.dims() == target) {
        return img;
    }
    cv::Mat out;
    cv::resize(img.mat(), out, cv::Size(target.cols, target.rows), 0, 0,
               mode == Interpolation::bilinear ? cv::INTER_LINEAR : cv::INTER_NEAREST);
    return {out, img.source_id()};
}

BinaryMask resize(const BinaryMask& mask, Dims target, Interpolation mode)
{
    if (mode != Interpolation::nearest) {
        throw std::invalid_argument("resize: masks must use nearest-neighbour interpolation");
    }
    if (target.rows < 1 || target.cols < 1) {
        throw std::invalid_argument("resize: target must be at least 1x1");
    }
    if (mask.dims() == target) {
        return mask;
    }
    if (mask.rows() < 1 || mask.cols() < 1) {
        throw std::invalid_argument("resize: empty source mask");
    }
    // Pixel-centre alignment: dst centre (i + 0.5) maps to src floor((i + 0.5) * src / dst).
    std::vector<int> src_col(static_cast<std::size_t>(target.cols));
    for (int c = 0; c < target.cols; ++c) {
        src_col[c] = std::min(mask.cols() - 1, static_cast<int>((2LL * c + 1) * mask.cols() / (2LL * target.cols)));
    }
    BinaryMask out(target.rows, target.cols);
    for (int r = 0; r < target.rows; ++r) {
        const int sr = std::min(mask.rows() - 1, static_cast<int>((2LL * r + 1) * mask.rows() / (2LL * target.rows)));
        for (int c = 0; c < target.cols; ++c) {
            out.set(r, c, mask(sr, src_col[c]));
        }
    }
    return out;
}

cv::Mat mask_to_mat(const BinaryMask& mask)
{
    cv::Mat out(mask.rows(), mask.cols(), CV_8U);
    auto v = mask.values();
    for (int r = 0; r < mask.rows(); ++r) {
        auto* row = out.ptr<std::uint8_t>(r);
        for (int c = 0; c < mask.cols(); ++c) {
            row[c] = v[static_cast<std::size_t>(r) * mask.cols() + c] ? 255 : 0;
        }
    }
    return out;
}

BinaryMask mat_to_mask(const cv::Mat& image)
{
    cv::Mat gray;
    if (image.channels() == 3) {
        cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
    } else if (image.channels() == 4) {
        cv::cvtColor(image, gray, cv::COLOR_BGRA2GRAY);
    } else {
        gray = image;
    }
    if (gray.depth() != CV_8U) {
        gray.convertTo(gray, CV_8U);
    }
    std::vector<std::uint8_t> values(static_cast<std::size_t>(gray.rows) * gray.cols);
    for (int r = 0; r < gray.rows; ++r) {
        const auto* row = gray.ptr<std::uint8_t>(r);
        for (int c = 0; c < gray.cols; ++c) {
            values[static_cast<std::size_t>(r) * gray.cols + c] = row[c] >= 128 ? 1 : 0;
        }
    }
    return {gray.rows, gray.cols, std::move(values)};
}

BinaryMask largest_component(const BinaryMask& mask)
{
    if (!mask.any()) {
        return mask;
    }
    cv::Mat labels;
    cv::Mat stats;
    cv::Mat centroids;
    const int n = cv::connectedComponentsWithStats(mask_to_mat(mask), labels, stats, centroids, 4, CV_32S);
    int best = 1;
    for (int label = 2; label < n; ++label) {
        if (stats.at<int>(label, cv::CC_STAT_AREA) > stats.at<int>(best, cv::CC_STAT_AREA)) {
            best = label;
        }
    }
    BinaryMask out(mask.rows(), mask.cols());
    for (int r = 0; r < mask.rows(); ++r) {
        const int* row = labels.ptr<int>(r);
        for (int c = 0; c < mask.cols(); ++c) {
            out.set(r, c, row[c] == best);
        }
    }
    return out;
}

BinaryMask drop_small_components(const BinaryMask& mask, double min_fraction)
{
    if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) {
        throw std::invalid_argument("drop_small_components: fraction must lie in [0, 1]");
    }
    if (!mask.any()) {
        return mask;
    }
    cv::Mat labels;
    cv::Mat stats;
    cv::Mat centroids;
    const int n = cv::connectedComponentsWithStats(mask_to_mat(mask), labels, stats, centroids, 4, CV_32S);
    int largest = 0;
    for (int label = 1; label < n; ++label) {
        largest = std::max(largest, stats.at<int>(label, cv::CC_STAT_AREA));
    }
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
    for (int label = 1; label < n; ++label) {
        keep[label] = stats.at<int>(label, cv::CC_STAT_AREA) >= min_fraction * largest;
    }
    BinaryMask out(mask.rows(), mask.cols());
    for (int r = 0; r < mask.rows(); ++r) {
        const int* row = labels.ptr<int>(r);
        for (int c = 0; c < mask.cols(); ++c) {
            out.set(r, c, keep[row[c]] != 0);
        }
    }
    return out;
}

BoundingBox bounding_box(const BinaryMask& mask)
{
    BoundingBox box{mask.rows(), -1, mask.cols(), -1};
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (mask(r, c)) {
                box.row_min = std::min(box.row_min, r);
                box.row_max = std::max(box.row_max, r);
                box.col_min = std::min(box.col_min, c);
                box.col_max = std::max(box.col_max, c);
            }
        }
    }
    if (box.row_max < 0) {
        throw NoDiscFound();
    }
    return box;
}

BoundingBox extract_bbox(const BinaryMask& mask)
{
    if (!mask.any()) {
        throw NoDiscFound();
    }
    return bounding_box(largest_component(mask));
}

BoundingBox expand_box(const BoundingBox& box, double margin_frac, Dims bounds)
{
    if (!(margin_frac >= 0.0)) {
        throw std::invalid_argument("expand_box: margin fraction must be non-negative");
    }
    if (!box.within(bounds)) {
        throw std::invalid_argument("expand_box: box lies outside the " + to_string(bounds) + " image");
    }
    const int dr = static_cast<int>(std::lround(margin_frac * box.height()));
    const int dc = static_cast<int>(std::lround(margin_frac * box.width()));
    return {std::max(0, box.row_min - dr), std::min(bounds.rows - 1, box.row_max + dr), std::max(0, box.col_min - dc),
            std::min(bounds.cols - 1, box.col_max + dc)};
}

std::pair<FundusImage, CropTransform> crop_with_margin(const FundusImage& img, const BoundingBox& box,
                                                       double margin_frac)
{
    const BoundingBox region = expand_box(box, margin_frac, img.dims());
    const cv::Rect rect(region.col_min, region.row_min, region.width(), region.height());
    FundusImage cropped(img.mat()(rect), img.source_id());
    CropTransform t{img.dims(), region, {region.height(), region.width()}, Interpolation::bilinear};
    return {std::move(cropped), t};
}

BinaryMask crop(const BinaryMask& mask, const BoundingBox& region)
{
    if (!region.within(mask.dims())) {
        throw std::invalid_argument("crop: region lies outside the mask");
    }
    BinaryMask out(region.height(), region.width());
    for (int r = 0; r < region.height(); ++r) {
        for (int c = 0; c < region.width(); ++c) {
            out.set(r, c, mask(region.row_min + r, region.col_min + c));
        }
    }
    return out;
}

BinaryMask map_mask_back(const BinaryMask& mask, const CropTransform& t)
{
    if (mask.dims() != t.output) {
        throw std::invalid_argument("map_mask_back: mask is " + to_string(mask.dims()) + " but transform output is " +
                                    to_string(t.output));
    }
    if (!t.region.within(t.source)) {
        throw std::invalid_argument("map_mask_back: transform region lies outside its source frame");
    }
    const BinaryMask local = resize(mask, Dims{t.region.height(), t.region.width()}, Interpolation::nearest);
    BinaryMask full(t.source.rows, t.source.cols);
    for (int r = 0; r < local.rows(); ++r) {
        for (int c = 0; c < local.cols(); ++c) {
            if (local(r, c)) {
                full.set(t.region.row_min + r, t.region.col_min + c, true);
            }
        }
    }
    return full;
}

BoundingBox scale_box(const BoundingBox& box, Dims from, Dims to)
{
    if (!box.within(from)) {
        throw std::invalid_argument("scale_box: box lies outside its " + to_string(from) + " frame");
    }
    if (to.rows < 1 || to.cols < 1) {
        throw std::invalid_argument("scale_box: target frame must be at least 1x1");
    }
    auto lo = [](int v, int n_from, int n_to) { return static_cast<int>(static_cast<long long>(v) * n_to / n_from); };
    auto hi = [](int v, int n_from, int n_to) {
        const long long edge = static_cast<long long>(v + 1) * n_to;
        return static_cast<int>((edge + n_from - 1) / n_from) - 1;
    };
    BoundingBox out{lo(box.row_min, from.rows, to.rows), std::min(to.rows - 1, hi(box.row_max, from.rows, to.rows)),
                    lo(box.col_min, from.cols, to.cols), std::min(to.cols - 1, hi(box.col_max, from.cols, to.cols))};
    if (out.row_max < out.row_min || out.col_max < out.col_min) {
        throw std::invalid_argument("scale_box: box collapses to zero area");
    }
    return out;
}

std::pair<FundusImage, CropTransform> extract_roi(const FundusImage& frame, const BoundingBox& box, double margin_frac,
                                                  Dims roi_dims)
{
    auto [cropped, t] = crop_with_margin(frame, box, margin_frac);
    t.output = roi_dims;
    t.interpolation = Interpolation::bilinear;
    return {resize(cropped, roi_dims, Interpolation::bilinear), t};
}

}  // namespace fundus
