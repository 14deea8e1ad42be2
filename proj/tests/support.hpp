#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fundus/metrics.hpp"
#include "fundus/preprocess.hpp"

namespace fundus::testing {

inline BinaryMask random_mask(std::mt19937_64& rng, int rows, int cols, double density = 0.5)
{
    std::bernoulli_distribution on(density);
    std::vector<std::uint8_t> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) {
        x = on(rng) ? 1 : 0;
    }
    return {rows, cols, std::move(v)};
}

inline ProbabilityMap random_probabilities(std::mt19937_64& rng, int rows, int cols, double lo = 0.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) {
        x = u(rng);
    }
    return {rows, cols, std::move(v)};
}

inline BinaryMask ellipse(int rows, int cols, double cy, double cx, double ry, double rx)
{
    BinaryMask m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double dy = (r - cy) / ry;
            const double dx = (c - cx) / rx;
            m.set(r, c, dx * dx + dy * dy <= 1.0);
        }
    }
    return m;
}

inline BinaryMask rectangle(int rows, int cols, int r0, int r1, int c0, int c1)
{
    BinaryMask m(rows, cols);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            m.set(r, c, true);
        }
    }
    return m;
}

inline FundusImage random_image(std::mt19937_64& rng, int rows, int cols)
{
    cv::Mat m(rows, cols, CV_8UC3);
    std::uniform_int_distribution<int> u(0, 255);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m.at<cv::Vec3b>(r, c) = cv::Vec3b(u(rng), u(rng), u(rng));
        }
    }
    return {m, "random"};
}

}  // namespace fundus::testing
