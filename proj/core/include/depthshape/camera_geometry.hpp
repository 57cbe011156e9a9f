#pragma once

#include <span>

#include "depthshape/types.hpp"

namespace depthshape {

/// Un-project a depth map through the pinhole model:
///   x = (u - u0) * d / f,  y = (v - v0) * d / f,  z = d.
/// Invalid pixels are omitted; provenance records (row, col) per point and the
/// output carries the input's unit tag.
PointCloud unproject(const DepthMap &depth, const CameraIntrinsics &cam);

struct PixelProjection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// Inverse of unproject for a single point (z > 0 required).
PixelProjection project_point(const Eigen::Vector3d &point, const CameraIntrinsics &cam);

/// Least-squares plane parameters for a point set (n . p = offset, |n| = 1).
struct PlaneFit {
    Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
    double offset = 0.0;
    double rms = 0.0;
};

/// Centroid-plus-smallest-eigenvector plane fit. Requires >= 3 non-collinear
/// points; throws NumericalError on rank-deficient input. The normal sign is
/// fixed by orient_normal.
PlaneFit fit_plane(std::span<const Eigen::Vector3d> points);

/// Sign convention shared project-wide: n.z <= 0 (toward the camera under the
/// un-projection frame). Ties on z = 0 resolved by y >= 0, then x >= 0.
Eigen::Vector3d orient_normal(const Eigen::Vector3d &n);

/// Per-pixel surface normals from a local least-squares plane fit over the
/// un-projected (window x window) neighborhood. Pixels with fewer than 3 valid
/// neighbors, or with a degenerate fit, are masked invalid (not an error).
NormalMap compute_normals(const DepthMap &depth, const CameraIntrinsics &cam, int window = 3);

/// Plane fit restricted to a segment's pixels of an un-projected grid; pixels
/// absent from `valid` are skipped.
PlaneFit fit_plane_at_pixels(const Grid<Eigen::Vector3d> &points, const Grid<uint8_t> &valid,
                             std::span<const int> pixel_indices);

/// Dense un-projection keeping the raster layout (invalid pixels left at zero).
void unproject_grid(const DepthMap &depth, const CameraIntrinsics &cam,
                    Grid<Eigen::Vector3d> &points, Grid<uint8_t> &valid);

} // namespace depthshape
