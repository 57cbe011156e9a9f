#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "depthshape/errors.hpp"

namespace depthshape {

/// Dense H x W raster, row-major.
template <typename T>
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int h, int w, T fill = T{})
        : height(h), width(w), data(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

    T &at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    const T &at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    T &operator[](int idx) { return data[static_cast<size_t>(idx)]; }
    const T &operator[](int idx) const { return data[static_cast<size_t>(idx)]; }

    int index(int r, int c) const { return r * width + c; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
    bool same_shape_as(int h, int w) const { return height == h && width == w; }
    size_t size() const { return data.size(); }
};

/// How depth values relate to metric depth.
enum class DepthUnit : uint8_t {
    Metric,     // meters
    Normalized, // unit range, scale/shift relative to metric unknown
    Affine,     // arbitrary positive-affine transform of metric depth
};

std::string to_string(DepthUnit unit);
DepthUnit depth_unit_from_string(const std::string &name);

/// Pinhole camera with square pixels (fx = fy) and integer-centered pixels:
/// pixel (u, v) is the exact sample location, no half-pixel offset.
struct CameraIntrinsics {
    double f = 0.0;  // focal length in pixels
    double u0 = 0.0; // principal point, x
    double v0 = 0.0; // principal point, y
    int width = 0;
    int height = 0;

    /// Focal length from a horizontal field of view; principal point centered
    /// at ((w-1)/2, (h-1)/2).
    static CameraIntrinsics from_fov(double fov_deg, int width, int height);

    /// Throws ConfigError when f <= 0 or the principal point is outside the image.
    void validate() const;
};

struct DepthMap {
    Grid<double> values;
    Grid<uint8_t> mask; // nonzero = valid
    DepthUnit unit = DepthUnit::Metric;

    DepthMap() = default;
    DepthMap(int h, int w, DepthUnit u = DepthUnit::Metric)
        : values(h, w, 0.0), mask(h, w, 0), unit(u) {}

    int height() const { return values.height; }
    int width() const { return values.width; }
    bool valid(int r, int c) const { return mask.at(r, c) != 0; }
    int valid_count() const;

    /// Values at valid pixels, row-major order.
    std::vector<double> valid_values() const;
};

struct NormalMap {
    Grid<Eigen::Vector3d> normals;
    Grid<uint8_t> mask;

    NormalMap() = default;
    NormalMap(int h, int w) : normals(h, w, Eigen::Vector3d::Zero()), mask(h, w, 0) {}

    int height() const { return normals.height; }
    int width() const { return normals.width; }
    bool valid(int r, int c) const { return mask.at(r, c) != 0; }
};

struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    /// Source pixel (row, col) per point; empty when the cloud has no raster origin.
    std::vector<std::array<int, 2>> provenance;
    DepthUnit unit = DepthUnit::Metric;

    size_t size() const { return points.size(); }
    bool has_provenance() const { return !provenance.empty(); }
};

/// A clustered planar region: member pixels plus the fitted plane n . p = offset.
struct PlaneSegment {
    std::vector<int> pixels; // row-major linear indices into the source raster
    Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
    double offset = 0.0;
    double rms = 0.0;

    int size() const { return static_cast<int>(pixels.size()); }
};

} // namespace depthshape
