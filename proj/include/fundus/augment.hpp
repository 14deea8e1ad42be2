#pragma once

#include <random>
#include <utility>

#include "fundus/metrics.hpp"
#include "fundus/preprocess.hpp"

namespace fundus {

struct AugmentParams {
    double rotation_deg = 30.0;  // uniform in [-r, r]
    double zoom_min = 0.9;
    double zoom_max = 1.1;
    double shift_frac = 0.1;  // of each side, uniform in [-s, s], rounded to whole pixels
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;

    [[nodiscard]] static AugmentParams none() { return {0.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }
    void validate() const;
};

/// One concrete geometric transform. Flips are applied first, then rotation and zoom about the
/// image centre, then the shift.
struct GeometricTransform {
    double rotation_deg = 0.0;
    double zoom = 1.0;
    int shift_rows = 0;
    int shift_cols = 0;
    bool hflip = false;
    bool vflip = false;

    [[nodiscard]] bool is_identity() const
    {
        return rotation_deg == 0.0 && zoom == 1.0 && shift_rows == 0 && shift_cols == 0 && !hflip && !vflip;
    }
};

GeometricTransform sample_transform(std::mt19937_64& rng, const AugmentParams& params, Dims dims);

/// Same transform on both rasters: bilinear for the image, nearest for the mask, zero fill outside.
std::pair<FundusImage, BinaryMask> apply_transform(const FundusImage& img, const BinaryMask& mask,
                                                   const GeometricTransform& t);

std::pair<FundusImage, BinaryMask> augment(const FundusImage& img, const BinaryMask& mask, std::mt19937_64& rng,
                                           const AugmentParams& params);

}  // namespace fundus
