#include "rlalign/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rlalign {

namespace {

struct Rotation {
    double c;
    double s;
};

Rotation rotation_of(double degrees)
{
    if (degrees == 0.0) return {1.0, 0.0};
    const double rad = degrees * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

void require_non_empty(const Image2D& img, const char* op)
{
    if (img.empty()) throw DimensionError(std::string(op) + ": empty image");
}

// Zero outside the raster.
inline double sample_or_zero(const Image2D& img, int row, int col)
{
    if (row < 0 || col < 0 || row >= img.height() || col >= img.width()) return 0.0;
    return img(row, col);
}

} // namespace

RigidTransform2D compose(const RigidTransform2D& first, const RigidTransform2D& second)
{
    const auto [c, s] = rotation_of(second.theta);
    return {c * first.tx - s * first.ty + second.tx,
            s * first.tx + c * first.ty + second.ty,
            first.theta + second.theta};
}

RigidTransform2D invert(const RigidTransform2D& t)
{
    // R(-theta) applied to -t.
    const auto [c, s] = rotation_of(t.theta);
    return {-(c * t.tx + s * t.ty), -(-s * t.tx + c * t.ty), -t.theta};
}

Image2D warp(const Image2D& img, const RigidTransform2D& t)
{
    require_non_empty(img, "warp");
    return warp_window(img, t, img.height(), img.width());
}

Image2D warp_window(const Image2D& img, const RigidTransform2D& t, int out_h, int out_w)
{
    require_non_empty(img, "warp");
    if (out_h < 1 || out_w < 1 || out_h > img.height() || out_w > img.width()) {
        throw DimensionError("warp: window larger than source");
    }
    if ((img.height() - out_h) % 2 != 0 || (img.width() - out_w) % 2 != 0) {
        throw DimensionError("warp: window and source must differ by an even margin");
    }
    const int off_x = (img.width() - out_w) / 2;
    const int off_y = (img.height() - out_h) / 2;
    const double cx = (img.width() - 1) / 2.0;
    const double cy = (img.height() - 1) / 2.0;
    const auto [c, s] = rotation_of(t.theta);

    Image2D out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const double dy = (r + off_y) - cy - t.ty;
        for (int col = 0; col < out_w; ++col) {
            const double dx = (col + off_x) - cx - t.tx;
            const double px = c * dx + s * dy + cx;
            const double py = -s * dx + c * dy + cy;
            const double fx0 = std::floor(px);
            const double fy0 = std::floor(py);
            const double fx = px - fx0;
            const double fy = py - fy0;
            const int x0 = static_cast<int>(fx0);
            const int y0 = static_cast<int>(fy0);
            if (x0 < -1 || y0 < -1 || x0 >= img.width() || y0 >= img.height()) {
                out(r, col) = 0.0f;
                continue;
            }
            const double v00 = sample_or_zero(img, y0, x0);
            const double v01 = sample_or_zero(img, y0, x0 + 1);
            const double v10 = sample_or_zero(img, y0 + 1, x0);
            const double v11 = sample_or_zero(img, y0 + 1, x0 + 1);
            const double top = (1.0 - fx) * v00 + fx * v01;
            const double bottom = (1.0 - fx) * v10 + fx * v11;
            out(r, col) = static_cast<float>((1.0 - fy) * top + fy * bottom);
        }
    }
    return out;
}

DiffImage diff(const Image2D& a, const Image2D& b)
{
    if (!a.same_shape(b)) throw DimensionError("diff: shape mismatch");
    DiffImage out(a.height(), a.width());
    auto pa = a.pixels();
    auto pb = b.pixels();
    auto po = out.pixels();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] - pb[i];
    return out;
}

Image2D crop(const Image2D& img, int cx, int cy, int size)
{
    if (size < 1) throw DimensionError("crop: window size must be positive");
    const int x0 = cx - size / 2;
    const int y0 = cy - size / 2;
    if (x0 < 0 || y0 < 0 || x0 + size > img.width() || y0 + size > img.height()) {
        throw BoundsError("crop: window exceeds image bounds");
    }
    Image2D out(size, size);
    for (int r = 0; r < size; ++r) {
        const float* src = &img(y0 + r, x0);
        std::copy(src, src + size, &out(r, 0));
    }
    return out;
}

Image2D crop_center(const Image2D& img, int out_h, int out_w)
{
    if (out_h < 1 || out_w < 1) throw DimensionError("crop: window size must be positive");
    if (out_h > img.height() || out_w > img.width()) {
        throw BoundsError("crop: window exceeds image bounds");
    }
    const int x0 = (img.width() - out_w) / 2;
    const int y0 = (img.height() - out_h) / 2;
    Image2D out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const float* src = &img(y0 + r, x0);
        std::copy(src, src + out_w, &out(r, 0));
    }
    return out;
}

Image2D resize(const Image2D& img, int out_h, int out_w)
{
    if (out_h < 1 || out_w < 1) throw DimensionError("resize: target dimensions must be >= 1");
    require_non_empty(img, "resize");
    const int h = img.height();
    const int w = img.width();
    auto source_coord = [](int i, int out_n, int in_n) {
        if (out_n == 1) return (in_n - 1) / 2.0;
        return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
    };
    Image2D out(out_h, out_w);
    for (int r = 0; r < out_h; ++r) {
        const double sy = source_coord(r, out_h, h);
        const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - y0;
        for (int c = 0; c < out_w; ++c) {
            const double sx = source_coord(c, out_w, w);
            const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 1);
            const int x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - x0;
            const double top = (1.0 - fx) * img(y0, x0) + fx * img(y0, x1);
            const double bottom = (1.0 - fx) * img(y1, x0) + fx * img(y1, x1);
            out(r, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
        }
    }
    return out;
}

Image2D normalize(const RawImage& raw)
{
    auto px = raw.pixels();
    for (double v : px) {
        if (!std::isfinite(v)) throw DataError("normalize: non-finite input value");
    }
    Image2D out(raw.height(), raw.width());
    if (px.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) return out;
    const double range = hi - lo;
    auto po = out.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) po[i] = static_cast<float>((px[i] - lo) / range);
    return out;
}

Image2D normalize(const Image2D& img)
{
    auto px = img.pixels();
    return normalize(RawImage(img.height(), img.width(), std::vector<double>(px.begin(), px.end())));
}

} // namespace rlalign
