#include <doctest.h>

#include "depthshape/scene_synth.hpp"
#include "depthshape/shape_recovery.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <map>

using namespace depthshape;

namespace {

/// Segment pixel lists per render label, restricted to labels with enough area.
std::map<int, std::vector<Eigen::Vector3d>> points_by_label(const RenderResult &render,
                                                            const CameraIntrinsics &cam,
                                                            int min_pixels = 30) {
    Grid<Eigen::Vector3d> pts;
    Grid<uint8_t> valid;
    unproject_grid(render.depth, cam, pts, valid);
    std::map<int, std::vector<Eigen::Vector3d>> groups;
    for (int i = 0; i < static_cast<int>(render.labels.size()); ++i)
        groups[render.labels[i]].push_back(pts[i]);
    for (auto it = groups.begin(); it != groups.end();)
        it = static_cast<int>(it->second.size()) < min_pixels ? groups.erase(it) : std::next(it);
    return groups;
}

} // namespace

TEST_SUITE("scene_synth") {

TEST_CASE("same seed gives bitwise-identical scenes") {
    const SyntheticScene a = generate_scene(42);
    const SyntheticScene b = generate_scene(42);
    CHECK(a.room_max == b.room_max);
    CHECK(a.camera.position == b.camera.position);
    CHECK(a.camera.yaw_rad == b.camera.yaw_rad);
    CHECK(a.camera.pitch_rad == b.camera.pitch_rad);
    REQUIRE(a.boxes.size() == b.boxes.size());
    for (size_t i = 0; i < a.boxes.size(); ++i) {
        CHECK(a.boxes[i].min == b.boxes[i].min);
        CHECK(a.boxes[i].max == b.boxes[i].max);
    }
    REQUIRE(a.planes.size() == b.planes.size());
    for (size_t i = 0; i < a.planes.size(); ++i) {
        CHECK(a.planes[i].normal == b.planes[i].normal);
        CHECK(a.planes[i].offset == b.planes[i].offset);
    }
}

TEST_CASE("seeded scenes satisfy the oblique-visibility invariant") {
    const CameraIntrinsics cam = default_scene_camera();
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const SyntheticScene scene = generate_scene(seed);
        const RenderResult render = render_depth(scene, cam);
        const auto surfaces = scene_surface_planes(scene);
        std::map<int, int> counts;
        for (int label : render.labels.data) ++counts[label];
        const Eigen::Matrix3d rot_t = scene.camera.rotation().transpose();
        int oblique = 0;
        for (const auto &[label, count] : counts) {
            if (count < 50) continue;
            if (std::abs((rot_t * surfaces[static_cast<size_t>(label)].normal).z()) < 0.95)
                ++oblique;
        }
        CHECK(oblique >= 2);
    }
}

TEST_CASE("zero-box config still yields a valid pure room") {
    SceneConfig config;
    config.box_count = {0, 0};
    const SyntheticScene scene = generate_scene(7, config);
    CHECK(scene.boxes.empty());
    CHECK(scene.planes.size() == 6);
    const RenderResult render = render_depth(scene, default_scene_camera());
    for (int label : render.labels.data) {
        CHECK(label >= 0);
        CHECK(label < 6);
    }
}

TEST_CASE("render axis-aligned wall depth is exact") {
    SyntheticScene scene;
    scene.room_min = Eigen::Vector3d(0, 0, 0);
    scene.room_max = Eigen::Vector3d(6, 5, 3);
    scene.planes = scene_surface_planes(scene); // rebuilt below from extents
    scene.planes.resize(6);
    scene.camera.position = Eigen::Vector3d(3, 2, 1.5); // wall y=5 is 3 ahead
    scene.camera.yaw_rad = scene.camera.pitch_rad = scene.camera.roll_rad = 0.0;
    CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, 129, 129);
    cam.u0 = 64.0;
    cam.v0 = 64.0;
    const RenderResult render = render_depth(scene, cam);
    CHECK(render.depth.values.at(64, 64) == 3.0);
    CHECK(render.labels.at(64, 64) == 5); // y-max wall
    CHECK(render.normals.normals.at(64, 64).z() == -1.0);
}

TEST_CASE("per-label plane fits of a render are exact") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(5);
    const RenderResult render = render_depth(scene, cam);
    const auto groups = points_by_label(render, cam);
    REQUIRE(groups.size() >= 3);
    for (const auto &[label, pts] : groups) {
        const PlaneFit fit = fit_plane(pts);
        CHECK(fit.rms < 1e-9);
    }
}

TEST_CASE("analytic normals match compute_normals on the render") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(12);
    const RenderResult render = render_depth(scene, cam);
    const NormalMap fitted = compute_normals(render.depth, cam, 3);
    double worst = 0.0;
    int checked = 0;
    for (int r = 1; r + 1 < cam.height; ++r) {
        for (int c = 1; c + 1 < cam.width; ++c) {
            if (!fitted.valid(r, c)) continue;
            // skip label boundaries: the window must sit on one surface
            const int label = render.labels.at(r, c);
            bool interior = true;
            for (int dr = -1; dr <= 1 && interior; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    if (render.labels.at(r + dr, c + dc) != label) {
                        interior = false;
                        break;
                    }
            if (!interior) continue;
            const double dot = std::min(
                1.0, std::abs(fitted.normals.at(r, c).dot(render.normals.normals.at(r, c))));
            worst = std::max(worst, std::acos(dot) * 180.0 / M_PI);
            ++checked;
        }
    }
    CHECK(checked > 1000);
    CHECK(worst < 0.5);
}

TEST_CASE("perturbation samples stay in the training ranges") {
    Rng rng(99);
    double sum_delta = 0.0, sum_alpha = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const PerturbationSample p = sample_perturbation(rng);
        REQUIRE(p.delta_d >= -0.25);
        REQUIRE(p.delta_d <= 0.8);
        REQUIRE(p.alpha_f >= 0.6);
        REQUIRE(p.alpha_f <= 1.25);
        sum_delta += p.delta_d;
        sum_alpha += p.alpha_f;
    }
    CHECK(sum_delta / n == doctest::Approx(0.275).epsilon(0.04));  // (a+b)/2
    CHECK(std::abs(sum_delta / n - 0.275) < 0.01);
    CHECK(std::abs(sum_alpha / n - 0.925) < 0.005);
}

TEST_CASE("identity perturbation is a no-op") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(3), cam);
    const DepthMap normalized = normalize_unit(render.depth);
    const PerturbationSample identity{0.0, 1.0};
    for (DistortionMode mode : {DistortionMode::Shift, DistortionMode::Focal}) {
        const DistortionResult out = apply_distortion(normalized, cam, identity, mode);
        const PointCloud direct = unproject(normalized, cam);
        REQUIRE(out.cloud.points.size() == direct.points.size());
        CHECK(out.masked_pixels == 0);
        for (size_t i = 0; i < direct.points.size(); ++i)
            CHECK(out.cloud.points[i] == direct.points[i]);
    }
}

TEST_CASE("shift distortion bends oblique walls") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(8);
    const RenderResult render = render_depth(scene, cam);
    const DepthMap normalized = normalize_scale(render.depth);

    const auto groups = points_by_label(render, cam, 300);
    const Eigen::Matrix3d rot_t = scene.camera.rotation().transpose();
    const auto surfaces = scene_surface_planes(scene);

    const DistortionResult distorted =
        apply_distortion(normalized, cam, {0.3, 1.0}, DistortionMode::Shift);
    // regroup the distorted cloud by provenance label
    std::map<int, std::vector<Eigen::Vector3d>> distorted_groups;
    for (size_t i = 0; i < distorted.cloud.points.size(); ++i) {
        const auto [r, c] = distorted.cloud.provenance[i];
        distorted_groups[render.labels.at(r, c)].push_back(distorted.cloud.points[i]);
    }
    int oblique_checked = 0;
    for (const auto &[label, pts] : groups) {
        const Eigen::Vector3d n_cam = rot_t * surfaces[static_cast<size_t>(label)].normal;
        if (std::abs(n_cam.z()) > 0.9) continue; // fronto-parallel-ish: shift preserves
        const double base_rms = fit_plane(pts).rms;
        const double bent_rms = fit_plane(distorted_groups[label]).rms;
        CHECK(bent_rms > base_rms + 1e-6);
        ++oblique_checked;
    }
    CHECK(oblique_checked >= 2);
}

TEST_CASE("focal distortion skews wall angles but keeps planes flat") {
    SceneConfig config;
    config.box_count = {0, 0};
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(21, config);
    const RenderResult render = render_depth(scene, cam);
    const DepthMap normalized = normalize_scale(render.depth);

    const DistortionResult distorted =
        apply_distortion(normalized, cam, {0.0, 0.8}, DistortionMode::Focal);
    std::map<int, std::vector<Eigen::Vector3d>> groups;
    for (size_t i = 0; i < distorted.cloud.points.size(); ++i) {
        const auto [r, c] = distorted.cloud.provenance[i];
        groups[render.labels.at(r, c)].push_back(distorted.cloud.points[i]);
    }
    std::vector<Eigen::Vector3d> normals;
    std::vector<int> labels;
    for (const auto &[label, pts] : groups) {
        if (pts.size() < 300) continue;
        const PlaneFit fit = fit_plane(pts);
        CHECK(fit.rms < 1e-9); // focal scaling preserves planarity
        normals.push_back(fit.normal);
        labels.push_back(label);
    }
    REQUIRE(normals.size() >= 2);
    // Two walls (or wall/floor) meeting at 90 degrees in truth now deviate.
    const auto surfaces = scene_surface_planes(scene);
    bool any_skewed = false;
    for (size_t i = 0; i < normals.size(); ++i)
        for (size_t j = i + 1; j < normals.size(); ++j) {
            const double true_dot = std::abs(surfaces[static_cast<size_t>(labels[i])].normal.dot(
                surfaces[static_cast<size_t>(labels[j])].normal));
            if (true_dot > 1e-9) continue; // not a right-angle pair in truth
            const double angle =
                std::acos(std::min(1.0, std::abs(normals[i].dot(normals[j])))) * 180.0 / M_PI;
            if (std::abs(angle - 90.0) > 1.0) any_skewed = true;
        }
    CHECK(any_skewed);
}

TEST_CASE("scene JSON round-trip") {
    const SyntheticScene scene = generate_scene(31);
    const SyntheticScene back = scene_from_json(scene_to_json(scene));
    CHECK(back.seed == scene.seed);
    CHECK(back.room_max == scene.room_max);
    CHECK(back.camera.position == scene.camera.position);
    CHECK(back.camera.yaw_rad == scene.camera.yaw_rad);
    CHECK(back.boxes.size() == scene.boxes.size());
    const RenderResult a = render_depth(scene, default_scene_camera());
    const RenderResult b = render_depth(back, default_scene_camera());
    CHECK(a.depth.values.data == b.depth.values.data);
    CHECK_THROWS_AS(scene_from_json("{not json"), DataError);
}

} // TEST_SUITE
