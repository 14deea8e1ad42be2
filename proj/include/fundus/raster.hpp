#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fundus {

struct Dims {
    int rows = 0;
    int cols = 0;

    friend bool operator==(const Dims&, const Dims&) = default;
    [[nodiscard]] std::size_t area() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

std::string to_string(const Dims& d);

// Row-major single-channel grid. Callers that need value invariants wrap it.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int rows, int cols, T fill = T{}) : dims_{rows, cols}, values_(checked_area(rows, cols), fill) {}
    Raster(int rows, int cols, std::vector<T> values) : dims_{rows, cols}, values_(std::move(values))
    {
        if (values_.size() != checked_area(rows, cols)) {
            throw std::invalid_argument("raster: value count does not match " + std::to_string(rows) + "x" +
                                        std::to_string(cols));
        }
    }

    [[nodiscard]] int rows() const { return dims_.rows; }
    [[nodiscard]] int cols() const { return dims_.cols; }
    [[nodiscard]] Dims dims() const { return dims_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] bool empty() const { return values_.empty(); }

    [[nodiscard]] T operator()(int r, int c) const { return values_[index(r, c)]; }
    T& operator()(int r, int c) { return values_[index(r, c)]; }

    [[nodiscard]] std::span<const T> values() const { return values_; }
    std::span<T> values() { return values_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static std::size_t checked_area(int rows, int cols)
    {
        if (rows < 0 || cols < 0) {
            throw std::invalid_argument("raster: negative dimensions");
        }
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
    [[nodiscard]] std::size_t index(int r, int c) const
    {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(dims_.cols) + static_cast<std::size_t>(c);
    }

    Dims dims_;
    std::vector<T> values_;
};

using RealGrid = Raster<double>;

}  // namespace fundus
