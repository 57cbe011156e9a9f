#include <doctest.h>

#include "depthshape/camera_geometry.hpp"
#include "depthshape/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace depthshape;

namespace {

DepthMap full_map(int h, int w, double value) {
    DepthMap map(h, w, DepthUnit::Metric);
    for (size_t i = 0; i < map.mask.size(); ++i) {
        map.values.data[i] = value;
        map.mask.data[i] = 1;
    }
    return map;
}

CameraIntrinsics simple_cam(double f, double u0, double v0, int w, int h) {
    CameraIntrinsics cam;
    cam.f = f;
    cam.u0 = u0;
    cam.v0 = v0;
    cam.width = w;
    cam.height = h;
    return cam;
}

} // namespace

TEST_SUITE("camera_geometry") {

TEST_CASE("unproject principal-point ray") {
    DepthMap depth = full_map(5, 5, 5.0);
    const CameraIntrinsics cam = simple_cam(123.0, 2.0, 2.0, 5, 5);
    const PointCloud cloud = unproject(depth, cam);
    // point at (u0, v0) lies on the optical axis regardless of f
    bool found = false;
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        if (cloud.provenance[i][0] == 2 && cloud.provenance[i][1] == 2) {
            CHECK(cloud.points[i].x() == 0.0);
            CHECK(cloud.points[i].y() == 0.0);
            CHECK(cloud.points[i].z() == 5.0);
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("unproject direct substitution") {
    DepthMap depth = full_map(1, 201, 2.0);
    const CameraIntrinsics cam = simple_cam(200.0, 100.0, 0.0, 201, 1);
    const PointCloud cloud = unproject(depth, cam);
    // pixel with u - u0 = 100, v = v0: x = 100 * 2 / 200 = 1
    const Eigen::Vector3d &p = cloud.points[200];
    CHECK(cloud.provenance[200][1] == 200);
    CHECK(p.x() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.y() == 0.0);
    CHECK(p.z() == 2.0);
}

TEST_CASE("unproject 3x3 fronto-parallel plane") {
    DepthMap depth = full_map(3, 3, 1.0);
    const CameraIntrinsics cam = simple_cam(1.0, 1.0, 1.0, 3, 3);
    const PointCloud cloud = unproject(depth, cam);
    REQUIRE(cloud.points.size() == 9);
    for (const auto &p : cloud.points) {
        CHECK(p.z() == 1.0);
        CHECK((p.x() == -1.0 || p.x() == 0.0 || p.x() == 1.0));
        CHECK((p.y() == -1.0 || p.y() == 0.0 || p.y() == 1.0));
    }
}

TEST_CASE("unproject rejects bad inputs") {
    DepthMap depth = full_map(3, 3, 1.0);
    CHECK_THROWS_AS(unproject(depth, simple_cam(1.0, 1.0, 1.0, 4, 4)), DataError);
    CHECK_THROWS_AS(unproject(depth, simple_cam(-1.0, 1.0, 1.0, 3, 3)), ConfigError);
}

TEST_CASE("round-trip projection reproduces pixels and depth") {
    Rng rng(17);
    DepthMap depth(8, 8, DepthUnit::Metric);
    for (size_t i = 0; i < depth.mask.size(); ++i) {
        depth.values.data[i] = rng.uniform(0.5, 6.0);
        depth.mask.data[i] = 1;
    }
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, 8, 8);
    const PointCloud cloud = unproject(depth, cam);
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const PixelProjection px = project_point(cloud.points[i], cam);
        CHECK(px.u == doctest::Approx(cloud.provenance[i][1]).epsilon(1e-12));
        CHECK(px.v == doctest::Approx(cloud.provenance[i][0]).epsilon(1e-12));
        CHECK(px.depth ==
              doctest::Approx(depth.values.at(cloud.provenance[i][0], cloud.provenance[i][1])));
    }
}

TEST_CASE("fit_plane exact horizontal plane") {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) pts.emplace_back(i, j, 5.0);
    const PlaneFit fit = fit_plane(pts);
    CHECK(fit.normal.x() == doctest::Approx(0.0));
    CHECK(fit.normal.y() == doctest::Approx(0.0));
    CHECK(fit.normal.z() == doctest::Approx(-1.0));
    CHECK(fit.offset == doctest::Approx(-5.0));
    CHECK(fit.rms == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_plane noisy oblique plane vs analytic") {
    Rng rng(3);
    const Eigen::Vector3d true_normal = Eigen::Vector3d(1, 1, 1).normalized();
    std::vector<Eigen::Vector3d> pts;
    const double noise = 1e-3;
    for (int i = 0; i < 500; ++i) {
        // points on x + y + z = 3 plus Gaussian off-plane noise
        const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
        const Eigen::Vector3d in_plane =
            Eigen::Vector3d(1, -1, 0).normalized() * a + Eigen::Vector3d(1, 1, -2).normalized() * b;
        pts.push_back(Eigen::Vector3d(1, 1, 1) + in_plane + true_normal * rng.normal(0.0, noise));
    }
    const PlaneFit fit = fit_plane(pts);
    const double angle =
        std::acos(std::min(1.0, std::abs(fit.normal.dot(true_normal)))) * 180.0 / M_PI;
    CHECK(angle < 0.2);
    CHECK(fit.rms == doctest::Approx(noise).epsilon(0.15));
}

TEST_CASE("fit_plane degenerate inputs") {
    std::vector<Eigen::Vector3d> two{{0, 0, 0}, {1, 1, 1}};
    CHECK_THROWS_AS(fit_plane(two), NumericalError);
    std::vector<Eigen::Vector3d> collinear{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
    CHECK_THROWS_AS(fit_plane(collinear), NumericalError);
}

TEST_CASE("compute_normals fronto-parallel plane") {
    DepthMap depth = full_map(9, 9, 2.5);
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, 9, 9);
    const NormalMap normals = compute_normals(depth, cam, 3);
    for (int r = 0; r < 9; ++r) {
        for (int c = 0; c < 9; ++c) {
            REQUIRE(normals.valid(r, c));
            CHECK(normals.normals.at(r, c).x() == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(normals.normals.at(r, c).y() == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(normals.normals.at(r, c).z() == doctest::Approx(-1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("compute_normals slanted plane z = 2 - x") {
    // Render the plane x + z = 2 analytically: d(u, v) = 2 / (1 + (u - u0)/f).
    const int n = 33;
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(40.0, n, n);
    DepthMap depth(n, n, DepthUnit::Metric);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            depth.values.at(r, c) = 2.0 / (1.0 + (c - cam.u0) / cam.f);
            depth.mask.at(r, c) = 1;
        }
    const NormalMap normals = compute_normals(depth, cam, 3);
    const Eigen::Vector3d expected = Eigen::Vector3d(-1, 0, -1).normalized(); // toward camera
    double max_angle = 0.0;
    for (int r = 1; r + 1 < n; ++r)
        for (int c = 1; c + 1 < n; ++c) {
            REQUIRE(normals.valid(r, c));
            const double dot = std::min(1.0, normals.normals.at(r, c).dot(expected));
            max_angle = std::max(max_angle, std::acos(dot) * 180.0 / M_PI);
            CHECK(normals.normals.at(r, c).z() <= 0.0);
        }
    CHECK(max_angle < 0.5);
}

TEST_CASE("compute_normals agrees with per-pixel SVD oracle") {
    Rng rng(11);
    const int n = 16;
    DepthMap depth(n, n, DepthUnit::Metric);
    for (size_t i = 0; i < depth.mask.size(); ++i) {
        depth.values.data[i] = rng.uniform(2.0, 3.0);
        depth.mask.data[i] = 1;
    }
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, n, n);
    const NormalMap normals = compute_normals(depth, cam, 3);

    Grid<Eigen::Vector3d> pts;
    Grid<uint8_t> valid;
    unproject_grid(depth, cam, pts, valid);
    for (int r = 1; r + 1 < n; ++r) {
        for (int c = 1; c + 1 < n; ++c) {
            if (!normals.valid(r, c)) continue;
            std::vector<Eigen::Vector3d> window;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) window.push_back(pts.at(r + dr, c + dc));
            const oracle::SvdPlane ref = oracle::svd_plane_fit(window);
            const double dot = std::min(1.0, std::abs(normals.normals.at(r, c).dot(ref.normal)));
            CHECK(std::acos(dot) < 1e-6);
        }
    }
}

TEST_CASE("normals stay unit length and camera-facing on random maps") {
    Rng rng(23);
    DepthMap depth(24, 24, DepthUnit::Metric);
    for (size_t i = 0; i < depth.mask.size(); ++i) {
        depth.values.data[i] = rng.uniform(1.0, 8.0);
        depth.mask.data[i] = rng.uniform() < 0.9;
    }
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, 24, 24);
    const NormalMap normals = compute_normals(depth, cam, 3);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 24; ++c) {
            if (!normals.valid(r, c)) continue;
            CHECK(std::abs(normals.normals.at(r, c).norm() - 1.0) < 1e-6);
            CHECK(normals.normals.at(r, c).z() <= 0.0);
        }
}

TEST_CASE("focal scaling preserves plane fits, shift breaks them") {
    // Oblique plane x + 2z = 6 rendered analytically.
    const int n = 21;
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(50.0, n, n);
    DepthMap depth(n, n, DepthUnit::Metric);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            depth.values.at(r, c) = 6.0 / (2.0 + (c - cam.u0) / cam.f);
            depth.mask.at(r, c) = 1;
        }

    const PointCloud base = unproject(depth, cam);
    const PlaneFit base_fit = fit_plane(base.points);
    CHECK(base_fit.rms < 1e-12);

    CameraIntrinsics scaled = cam;
    scaled.f = 0.7 * cam.f;
    const PlaneFit scaled_fit = fit_plane(unproject(depth, scaled).points);
    CHECK(std::abs(scaled_fit.rms - base_fit.rms) < 1e-9);

    DepthMap shifted = depth;
    for (double &v : shifted.values.data) v += 0.4;
    const PlaneFit shifted_fit = fit_plane(unproject(shifted, cam).points);
    CHECK(shifted_fit.rms > base_fit.rms + 1e-4);

    // Fronto-parallel planes are exactly unaffected by shift.
    DepthMap flat = full_map(n, n, 3.0);
    for (double &v : flat.values.data) v += 0.4;
    const PlaneFit flat_fit = fit_plane(unproject(flat, cam).points);
    CHECK(flat_fit.rms < 1e-12);
}

} // TEST_SUITE
