#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fundus/raster.hpp"

namespace fundus {

/// Per-pixel foreground probabilities. Every value lies in [0, 1].
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    ProbabilityMap(int rows, int cols, double fill);
    ProbabilityMap(int rows, int cols, std::vector<double> values);

    [[nodiscard]] int rows() const { return grid_.rows(); }
    [[nodiscard]] int cols() const { return grid_.cols(); }
    [[nodiscard]] Dims dims() const { return grid_.dims(); }
    [[nodiscard]] double operator()(int r, int c) const { return grid_(r, c); }
    [[nodiscard]] std::span<const double> values() const { return grid_.values(); }

    friend bool operator==(const ProbabilityMap&, const ProbabilityMap&) = default;

private:
    RealGrid grid_;
};

/// Per-pixel {0,1} labels.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int rows, int cols);
    BinaryMask(int rows, int cols, std::vector<std::uint8_t> values);

    [[nodiscard]] int rows() const { return grid_.rows(); }
    [[nodiscard]] int cols() const { return grid_.cols(); }
    [[nodiscard]] Dims dims() const { return grid_.dims(); }
    [[nodiscard]] bool operator()(int r, int c) const { return grid_(r, c) != 0; }
    void set(int r, int c, bool on) { grid_(r, c) = on ? 1 : 0; }
    [[nodiscard]] std::span<const std::uint8_t> values() const { return grid_.values(); }
    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] bool any() const { return count() > 0; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    Raster<std::uint8_t> grid_;
};

struct ImageScore {
    std::string id;
    double iou = 0.0;
    double dice = 0.0;
};

/// Aggregate iou/dice are unweighted means over per_image.
struct ScoreReport {
    double iou = 0.0;
    double dice = 0.0;
    std::vector<ImageScore> per_image;
};

inline constexpr double kSoftDiceSmoothing = 1e-6;
inline constexpr double kDefaultBinarizeThreshold = 0.5;
inline constexpr double kGlaucomaCdrThreshold = 0.65;

// (2 sum(a*b) + eps) / (sum(a^2) + sum(b^2) + eps)
double soft_dice(const ProbabilityMap& pred, const BinaryMask& target);
double log_dice_loss(const ProbabilityMap& pred, const BinaryMask& target);
// d(-log soft_dice)/d pred, same shape as pred.
RealGrid loss_gradient(const ProbabilityMap& pred, const BinaryMask& target);

double iou(const BinaryMask& a, const BinaryMask& b);
double dice_binary(const BinaryMask& a, const BinaryMask& b);

BinaryMask binarize(const ProbabilityMap& pred, double threshold = kDefaultBinarizeThreshold);
ProbabilityMap as_probabilities(const BinaryMask& mask);

/// Ratio of vertical extents (row spans) of cup and disc foreground. 0 for an empty cup.
double cdr(const BinaryMask& disc, const BinaryMask& cup);
bool glaucoma_flag(double cdr_value);

ImageScore score_image(std::string id, const BinaryMask& predicted, const BinaryMask& truth);
ScoreReport summarize(std::vector<ImageScore> per_image);

}  // namespace fundus
