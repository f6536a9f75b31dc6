#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rlalign/errors.hpp"

namespace rlalign {

struct IntensityTag {};
struct SignedTag {};
struct RawTag {};

// Row-major single-channel raster. The tag keeps intensity images, signed
// difference images and unnormalized data from being mixed up.
template <class T, class Tag>
class Raster {
public:
    using value_type = T;

    Raster() = default;
    Raster(int height, int width, T fill = T{})
        : height_(checked(height)), width_(checked(width)),
          pixels_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill)
    {}
    Raster(int height, int width, std::vector<T> pixels)
        : height_(checked(height)), width_(checked(width)), pixels_(std::move(pixels))
    {
        if (pixels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
            throw DimensionError("pixel count does not match height x width");
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    T& operator()(int row, int col) noexcept { return pixels_[index(row, col)]; }
    const T& operator()(int row, int col) const noexcept { return pixels_[index(row, col)]; }

    std::span<T> pixels() noexcept { return pixels_; }
    std::span<const T> pixels() const noexcept { return pixels_; }
    const std::vector<T>& vector() const noexcept { return pixels_; }

    bool same_shape(const auto& other) const noexcept
    {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    static int checked(int extent)
    {
        if (extent < 0) throw DimensionError("negative raster extent");
        return extent;
    }
    std::size_t index(int row, int col) const noexcept
    {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(col);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> pixels_;
};

// Intensities in [0,1] once normalized.
using Image2D = Raster<float, IntensityTag>;
// Per-pixel difference of two intensity images, values in [-1,1].
using DiffImage = Raster<float, SignedTag>;
// Arbitrary finite data awaiting normalization.
using RawImage = Raster<double, RawTag>;

// Rotation about the raster center followed by translation. Angles in degrees.
struct RigidTransform2D {
    double tx = 0.0;
    double ty = 0.0;
    double theta = 0.0;

    static constexpr RigidTransform2D identity() noexcept { return {}; }
    bool is_identity() const noexcept { return tx == 0.0 && ty == 0.0 && theta == 0.0; }

    friend bool operator==(const RigidTransform2D&, const RigidTransform2D&) = default;
};

// Transform equivalent to applying `first` and then `second`.
RigidTransform2D compose(const RigidTransform2D& first, const RigidTransform2D& second);
RigidTransform2D invert(const RigidTransform2D& t);

// Resamples `img` under `t`: inverse-mapped bilinear interpolation, pivot at
// ((w-1)/2, (h-1)/2), samples outside the source read as 0.
Image2D warp(const Image2D& img, const RigidTransform2D& t);

// Centered out_h x out_w window of warp(img, t), computed without
// materializing the full warp. Requires matching parity so both centers
// coincide on the pixel lattice.
Image2D warp_window(const Image2D& img, const RigidTransform2D& t, int out_h, int out_w);

DiffImage diff(const Image2D& a, const Image2D& b);

// Square window whose top-left corner is (cx - size/2, cy - size/2).
Image2D crop(const Image2D& img, int cx, int cy, int size);
// Centered window of the given shape.
Image2D crop_center(const Image2D& img, int out_h, int out_w);

// Bilinear resampling on a corner-aligned grid.
Image2D resize(const Image2D& img, int out_h, int out_w);

// Affine min/max rescale onto [0,1]; a constant raster maps to zeros.
Image2D normalize(const RawImage& raw);
Image2D normalize(const Image2D& img);

} // namespace rlalign
