#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "n2c/error.hpp"

namespace n2c {

/// Dense row-major 2D slice in 64-bit precision.
struct Image {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), pixels(r * c, fill) {}
    Image(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), pixels(std::move(values))
    {
        if (pixels.size() != rows * cols) {
            throw ValidationError("Image: pixel count does not match rows*cols");
        }
    }

    [[nodiscard]] std::size_t size() const { return pixels.size(); }
    [[nodiscard]] double& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
    [[nodiscard]] bool same_shape(const Image& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Image&) const = default;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what)
{
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x"
                              + std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x"
                              + std::to_string(b.cols) + ")");
    }
}

} // namespace n2c
