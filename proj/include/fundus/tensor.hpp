#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fundus/preprocess.hpp"

namespace fundus {

/// Dense channel-major (C, H, W) float activations.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill)
    {
    }

    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] std::span<float> channel(int c) { return {data.data() + c * plane(), plane()}; }
    [[nodiscard]] std::span<const float> channel(int c) const { return {data.data() + c * plane(), plane()}; }
    float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
};

/// RGB image scaled to [0,1], one channel per colour plane.
Tensor to_network_input(const FundusImage& img);

}  // namespace fundus
