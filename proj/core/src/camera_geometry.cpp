#include "depthshape/camera_geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace depthshape {

namespace {

void check_depth_matches_camera(const DepthMap &depth, const CameraIntrinsics &cam) {
    cam.validate();
    if (depth.height() != cam.height || depth.width() != cam.width)
        throw DataError("unproject: depth map is " + std::to_string(depth.width()) + "x" +
                        std::to_string(depth.height()) + " but camera expects " +
                        std::to_string(cam.width) + "x" + std::to_string(cam.height));
}

} // namespace

PointCloud unproject(const DepthMap &depth, const CameraIntrinsics &cam) {
    check_depth_matches_camera(depth, cam);
    PointCloud cloud;
    cloud.unit = depth.unit;
    cloud.points.reserve(static_cast<size_t>(depth.valid_count()));
    cloud.provenance.reserve(cloud.points.capacity());
    const double inv_f = 1.0 / cam.f;
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            if (!depth.valid(r, c)) continue;
            const double d = depth.values.at(r, c);
            cloud.points.emplace_back((c - cam.u0) * d * inv_f, (r - cam.v0) * d * inv_f, d);
            cloud.provenance.push_back({r, c});
        }
    }
    return cloud;
}

void unproject_grid(const DepthMap &depth, const CameraIntrinsics &cam,
                    Grid<Eigen::Vector3d> &points, Grid<uint8_t> &valid) {
    check_depth_matches_camera(depth, cam);
    points = Grid<Eigen::Vector3d>(depth.height(), depth.width(), Eigen::Vector3d::Zero());
    valid = depth.mask;
    const double inv_f = 1.0 / cam.f;
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            if (!depth.valid(r, c)) continue;
            const double d = depth.values.at(r, c);
            points.at(r, c) = {(c - cam.u0) * d * inv_f, (r - cam.v0) * d * inv_f, d};
        }
    }
}

PixelProjection project_point(const Eigen::Vector3d &point, const CameraIntrinsics &cam) {
    cam.validate();
    if (!(point.z() > 0.0))
        throw DataError("project_point: point has non-positive depth");
    PixelProjection px;
    px.u = point.x() * cam.f / point.z() + cam.u0;
    px.v = point.y() * cam.f / point.z() + cam.v0;
    px.depth = point.z();
    return px;
}

Eigen::Vector3d orient_normal(const Eigen::Vector3d &n) {
    if (n.z() > 0.0) return -n;
    if (n.z() == 0.0) {
        if (n.y() < 0.0) return -n;
        if (n.y() == 0.0 && n.x() < 0.0) return -n;
    }
    return n;
}

namespace {

/// Shared eigen-decomposition kernel over a centered scatter matrix.
/// Returns false when the configuration is rank-deficient (collinear points).
bool plane_from_scatter(const Eigen::Matrix3d &scatter, const Eigen::Vector3d &centroid,
                        int count, PlaneFit &out) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    solver.computeDirect(scatter);
    const Eigen::Vector3d evals = solver.eigenvalues(); // ascending; ties keep index order
    const double scale = std::max(evals(2), 1.0);
    if (evals(1) <= 1e-12 * scale) return false; // collinear: two near-zero eigenvalues
    out.normal = orient_normal(solver.eigenvectors().col(0).normalized());
    out.offset = out.normal.dot(centroid);
    out.rms = std::sqrt(std::max(0.0, evals(0)) / count);
    return true;
}

} // namespace

PlaneFit fit_plane(std::span<const Eigen::Vector3d> points) {
    if (points.size() < 3)
        throw NumericalError("fit_plane: degenerate fit, need >= 3 points, got " +
                             std::to_string(points.size()));
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto &p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto &p : points) {
        const Eigen::Vector3d q = p - centroid;
        scatter += q * q.transpose();
    }
    PlaneFit fit;
    if (!plane_from_scatter(scatter, centroid, static_cast<int>(points.size()), fit))
        throw NumericalError("fit_plane: degenerate fit, points are collinear");
    // rms from the actual residuals: the smallest eigenvalue carries the
    // solver's absolute error (eps * ||scatter||), which swamps exact fits
    double sq = 0.0;
    for (const auto &p : points) {
        const double d = fit.normal.dot(p - centroid);
        sq += d * d;
    }
    fit.rms = std::sqrt(sq / static_cast<double>(points.size()));
    return fit;
}

PlaneFit fit_plane_at_pixels(const Grid<Eigen::Vector3d> &points, const Grid<uint8_t> &valid,
                             std::span<const int> pixel_indices) {
    std::vector<Eigen::Vector3d> selected;
    selected.reserve(pixel_indices.size());
    for (int idx : pixel_indices)
        if (valid[idx]) selected.push_back(points[idx]);
    return fit_plane(selected);
}

NormalMap compute_normals(const DepthMap &depth, const CameraIntrinsics &cam, int window) {
    if (window < 3 || window % 2 == 0)
        throw ConfigError("compute_normals: window must be an odd integer >= 3");
    Grid<Eigen::Vector3d> points;
    Grid<uint8_t> valid;
    unproject_grid(depth, cam, points, valid);

    NormalMap normals(depth.height(), depth.width());
    const int k = window / 2;
    for (int r = 0; r < depth.height(); ++r) {
        for (int c = 0; c < depth.width(); ++c) {
            if (!depth.valid(r, c)) continue;
            Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
            int count = 0;
            for (int dr = -k; dr <= k; ++dr) {
                for (int dc = -k; dc <= k; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (!points.in_bounds(rr, cc) || !valid.at(rr, cc)) continue;
                    centroid += points.at(rr, cc);
                    ++count;
                }
            }
            if (count < 3) continue;
            centroid /= count;
            Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
            for (int dr = -k; dr <= k; ++dr) {
                for (int dc = -k; dc <= k; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (!points.in_bounds(rr, cc) || !valid.at(rr, cc)) continue;
                    const Eigen::Vector3d q = points.at(rr, cc) - centroid;
                    scatter += q * q.transpose();
                }
            }
            PlaneFit fit;
            if (!plane_from_scatter(scatter, centroid, count, fit)) continue;
            normals.normals.at(r, c) = fit.normal;
            normals.mask.at(r, c) = 1;
        }
    }
    return normals;
}

} // namespace depthshape
