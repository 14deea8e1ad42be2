#include "fundus/augment.hpp"

#include <cmath>
#include <stdexcept>

#include <opencv2/imgproc.hpp>

namespace fundus {

void AugmentParams::validate() const
{
    if (!(rotation_deg >= 0.0) || !(shift_frac >= 0.0 && shift_frac < 1.0)) {
        throw std::invalid_argument("AugmentParams: rotation must be >= 0 and shift fraction in [0,1)");
    }
    if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) {
        throw std::invalid_argument("AugmentParams: zoom range must satisfy 0 < min <= max");
    }
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0 && vflip_prob >= 0.0 && vflip_prob <= 1.0)) {
        throw std::invalid_argument("AugmentParams: flip probabilities must lie in [0,1]");
    }
}

GeometricTransform sample_transform(std::mt19937_64& rng, const AugmentParams& params, Dims dims)
{
    params.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto span = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    GeometricTransform t;
    t.rotation_deg = params.rotation_deg > 0.0 ? span(-params.rotation_deg, params.rotation_deg) : 0.0;
    t.zoom = params.zoom_max > params.zoom_min ? span(params.zoom_min, params.zoom_max) : params.zoom_min;
    if (params.shift_frac > 0.0) {
        t.shift_rows = static_cast<int>(std::lround(span(-params.shift_frac, params.shift_frac) * dims.rows));
        t.shift_cols = static_cast<int>(std::lround(span(-params.shift_frac, params.shift_frac) * dims.cols));
    }
    t.hflip = unit(rng) < params.hflip_prob;
    t.vflip = unit(rng) < params.vflip_prob;
    return t;
}

std::pair<FundusImage, BinaryMask> apply_transform(const FundusImage& img, const BinaryMask& mask,
                                                   const GeometricTransform& t)
{
    if (img.dims() != mask.dims()) {
        throw std::invalid_argument("augment: image " + to_string(img.dims()) + " and mask " +
                                    to_string(mask.dims()) + " are not aligned");
    }
    cv::Mat pixels = img.mat();
    cv::Mat labels = mask_to_mat(mask);
    const int flip_code = t.hflip && t.vflip ? -1 : (t.hflip ? 1 : 0);
    if (t.hflip || t.vflip) {
        cv::Mat fp;
        cv::Mat fl;
        cv::flip(pixels, fp, flip_code);
        cv::flip(labels, fl, flip_code);
        pixels = fp;
        labels = fl;
    }
    if (t.rotation_deg != 0.0 || t.zoom != 1.0 || t.shift_rows != 0 || t.shift_cols != 0) {
        const cv::Point2f centre(static_cast<float>(img.cols() - 1) / 2.0f, static_cast<float>(img.rows() - 1) / 2.0f);
        cv::Mat m = cv::getRotationMatrix2D(centre, t.rotation_deg, t.zoom);
        m.at<double>(0, 2) += t.shift_cols;
        m.at<double>(1, 2) += t.shift_rows;
        const cv::Size size(img.cols(), img.rows());
        cv::Mat wp;
        cv::Mat wl;
        cv::warpAffine(pixels, wp, m, size, cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));
        cv::warpAffine(labels, wl, m, size, cv::INTER_NEAREST, cv::BORDER_CONSTANT, cv::Scalar::all(0));
        pixels = wp;
        labels = wl;
    }
    return {FundusImage(pixels, img.source_id()), mat_to_mask(labels)};
}

std::pair<FundusImage, BinaryMask> augment(const FundusImage& img, const BinaryMask& mask, std::mt19937_64& rng,
                                           const AugmentParams& params)
{
    return apply_transform(img, mask, sample_transform(rng, params, img.dims()));
}

}  // namespace fundus
