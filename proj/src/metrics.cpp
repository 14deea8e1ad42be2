#include "fundus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace fundus {

std::string to_string(const Dims& d)
{
    return std::to_string(d.rows) + "x" + std::to_string(d.cols);
}

namespace {

void require_nonempty(Dims d, const char* what)
{
    if (d.rows < 1 || d.cols < 1) {
        throw std::invalid_argument(std::string(what) + ": dimensions must be at least 1x1, got " + to_string(d));
    }
}

void require_same_dims(Dims a, Dims b, const char* op)
{
    if (a != b) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch " + to_string(a) + " vs " + to_string(b));
    }
}

struct OverlapCounts {
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t both = 0;
};

OverlapCounts overlap(const BinaryMask& a, const BinaryMask& b, const char* op)
{
    require_same_dims(a.dims(), b.dims(), op);
    OverlapCounts n;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        n.a += av[i];
        n.b += bv[i];
        n.both += av[i] & bv[i];
    }
    return n;
}

std::optional<std::pair<int, int>> row_span(const BinaryMask& m)
{
    int first = -1;
    int last = -1;
    for (int r = 0; r < m.rows(); ++r) {
        auto row = m.values().subspan(static_cast<std::size_t>(r) * m.cols(), m.cols());
        if (std::any_of(row.begin(), row.end(), [](std::uint8_t v) { return v != 0; })) {
            if (first < 0) {
                first = r;
            }
            last = r;
        }
    }
    if (first < 0) {
        return std::nullopt;
    }
    return std::pair{first, last};
}

struct DiceSums {
    double numerator = 0.0;    // 2 sum(a b) + eps
    double denominator = 0.0;  // sum(a^2) + sum(b^2) + eps
};

DiceSums dice_sums(const ProbabilityMap& pred, const BinaryMask& target)
{
    require_same_dims(pred.dims(), target.dims(), "soft_dice");
    require_nonempty(pred.dims(), "soft_dice");
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    auto pv = pred.values();
    auto tv = target.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double a = pv[i];
        const double b = tv[i];
        ab += a * b;
        aa += a * a;
        bb += b * b;
    }
    return {2.0 * ab + kSoftDiceSmoothing, aa + bb + kSoftDiceSmoothing};
}

}  // namespace

ProbabilityMap::ProbabilityMap(int rows, int cols, double fill) : ProbabilityMap(rows, cols, std::vector<double>(static_cast<std::size_t>(std::max(rows, 0)) * std::max(cols, 0), fill)) {}

ProbabilityMap::ProbabilityMap(int rows, int cols, std::vector<double> values) : grid_(rows, cols, std::move(values))
{
    require_nonempty(grid_.dims(), "ProbabilityMap");
    for (double v : grid_.values()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("ProbabilityMap: value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

BinaryMask::BinaryMask(int rows, int cols) : grid_(rows, cols, std::uint8_t{0}) {}

BinaryMask::BinaryMask(int rows, int cols, std::vector<std::uint8_t> values) : grid_(rows, cols, std::move(values))
{
    for (auto v : grid_.values()) {
        if (v > 1) {
            throw std::invalid_argument("BinaryMask: value " + std::to_string(v) + " is not 0 or 1");
        }
    }
}

std::size_t BinaryMask::count() const
{
    auto v = grid_.values();
    return std::accumulate(v.begin(), v.end(), std::size_t{0});
}

double soft_dice(const ProbabilityMap& pred, const BinaryMask& target)
{
    const auto s = dice_sums(pred, target);
    return s.numerator / s.denominator;
}

double log_dice_loss(const ProbabilityMap& pred, const BinaryMask& target)
{
    return -std::log(soft_dice(pred, target));
}

RealGrid loss_gradient(const ProbabilityMap& pred, const BinaryMask& target)
{
    // l = -ln N + ln D  =>  dl/da = 2a/D - 2b/N
    const auto s = dice_sums(pred, target);
    RealGrid grad(pred.rows(), pred.cols());
    auto pv = pred.values();
    auto tv = target.values();
    auto gv = grad.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        gv[i] = 2.0 * pv[i] / s.denominator - 2.0 * tv[i] / s.numerator;
    }
    return grad;
}

double iou(const BinaryMask& a, const BinaryMask& b)
{
    const auto n = overlap(a, b, "iou");
    const std::size_t uni = n.a + n.b - n.both;
    if (uni == 0) {
        return 1.0;
    }
    return static_cast<double>(n.both) / static_cast<double>(uni);
}

double dice_binary(const BinaryMask& a, const BinaryMask& b)
{
    const auto n = overlap(a, b, "dice_binary");
    if (n.a + n.b == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(n.both) / static_cast<double>(n.a + n.b);
}

BinaryMask binarize(const ProbabilityMap& pred, double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("binarize: threshold must lie in (0,1), got " + std::to_string(threshold));
    }
    std::vector<std::uint8_t> out(pred.values().size());
    std::transform(pred.values().begin(), pred.values().end(), out.begin(),
                   [threshold](double v) { return static_cast<std::uint8_t>(v >= threshold ? 1 : 0); });
    return {pred.rows(), pred.cols(), std::move(out)};
}

ProbabilityMap as_probabilities(const BinaryMask& mask)
{
    std::vector<double> out(mask.values().begin(), mask.values().end());
    return {mask.rows(), mask.cols(), std::move(out)};
}

double cdr(const BinaryMask& disc, const BinaryMask& cup)
{
    require_same_dims(disc.dims(), cup.dims(), "cdr");
    const auto disc_span = row_span(disc);
    if (!disc_span) {
        throw std::invalid_argument("cdr: disc mask is empty, ratio undefined");
    }
    const auto cup_span = row_span(cup);
    if (!cup_span) {
        return 0.0;
    }
    const double disc_height = disc_span->second - disc_span->first + 1;
    const double cup_height = cup_span->second - cup_span->first + 1;
    return cup_height / disc_height;
}

bool glaucoma_flag(double cdr_value)
{
    if (!(cdr_value >= 0.0)) {
        throw std::invalid_argument("glaucoma_flag: CDR must be non-negative");
    }
    return cdr_value >= kGlaucomaCdrThreshold;
}

ImageScore score_image(std::string id, const BinaryMask& predicted, const BinaryMask& truth)
{
    return {std::move(id), iou(predicted, truth), dice_binary(predicted, truth)};
}

ScoreReport summarize(std::vector<ImageScore> per_image)
{
    ScoreReport report;
    if (!per_image.empty()) {
        for (const auto& s : per_image) {
            report.iou += s.iou;
            report.dice += s.dice;
        }
        report.iou /= static_cast<double>(per_image.size());
        report.dice /= static_cast<double>(per_image.size());
    }
    report.per_image = std::move(per_image);
    return report;
}

}  // namespace fundus
