#include <doctest.h>

#include "depthshape/scene_synth.hpp"
#include "depthshape/shape_recovery.hpp"

#include <cmath>
#include <map>

using namespace depthshape;

namespace {

DepthMap map_from(const std::vector<double> &values, int h, int w) {
    DepthMap map(h, w, DepthUnit::Metric);
    for (size_t i = 0; i < values.size(); ++i) {
        map.values.data[i] = values[i];
        map.mask.data[i] = 1;
    }
    return map;
}

/// Scale-normalized render plus a planted shift: the unique flatness-restoring
/// correction is exactly -delta.
DepthMap shifted_fixture(const RenderResult &render, double delta, const CameraIntrinsics &cam,
                         int *masked = nullptr) {
    const DepthMap normalized = normalize_scale(render.depth);
    const DistortedDepth distorted = distort_depth(normalized, cam, {delta, 1.0},
                                                   DistortionMode::Shift);
    if (masked != nullptr) *masked = distorted.masked_pixels;
    return distorted.depth;
}

double plane_rms_per_label(const DepthMap &depth, const CameraIntrinsics &cam,
                           const Grid<int> &labels, int min_pixels, double /*unused*/,
                           double *max_rms) {
    Grid<Eigen::Vector3d> pts;
    Grid<uint8_t> valid;
    unproject_grid(depth, cam, pts, valid);
    std::map<int, std::vector<Eigen::Vector3d>> groups;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i)
        if (valid[i]) groups[labels[i]].push_back(pts[i]);
    double total = 0.0;
    *max_rms = 0.0;
    int used = 0;
    for (const auto &[label, group] : groups) {
        if (static_cast<int>(group.size()) < min_pixels) continue;
        const double rms = fit_plane(group).rms;
        total += rms;
        *max_rms = std::max(*max_rms, rms);
        ++used;
    }
    REQUIRE(used >= 2);
    return total;
}

} // namespace

TEST_SUITE("shape_recovery") {

TEST_CASE("normalize_unit examples") {
    const DepthMap m = normalize_unit(map_from({2, 4, 6}, 1, 3));
    CHECK(m.values.data[0] == 0.0);
    CHECK(m.values.data[1] == doctest::Approx(0.5));
    CHECK(m.values.data[2] == 1.0);
    CHECK(m.unit == DepthUnit::Normalized);

    // already spanning [0, 1]: unchanged
    DepthMap unit = map_from({0.0, 0.25, 0.75, 1.0}, 2, 2);
    unit.unit = DepthUnit::Normalized;
    const DepthMap again = normalize_unit(unit);
    CHECK(again.values.data == unit.values.data);

    Rng rng(44);
    DepthMap random(7, 7, DepthUnit::Metric);
    for (size_t i = 0; i < random.mask.size(); ++i) {
        random.values.data[i] = rng.uniform(3.0, 9.0);
        random.mask.data[i] = 1;
    }
    const DepthMap normalized = normalize_unit(random);
    double lo = 2.0, hi = -1.0;
    for (double v : normalized.values.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);

    CHECK_THROWS_AS(normalize_unit(map_from({3, 3, 3, 3}, 2, 2)), NumericalError);
}

TEST_CASE("recover_shift finds the zero fixed point on undistorted scenes") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(50), cam);
    const DepthMap normalized = normalize_scale(render.depth);
    const RecoveryResult result = recover_shift(normalized, cam);
    CHECK(std::abs(result.delta_d) <= 1e-3);
    CHECK(result.segments_used >= 2);
}

TEST_CASE("recover_shift undoes a planted shift") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(51), cam);
    const DepthMap distorted = shifted_fixture(render, 0.3, cam);
    const RecoveryResult result = recover_shift(distorted, cam);
    CHECK(std::abs(result.delta_d + 0.3) <= 0.02);
}

TEST_CASE("golden-section refinement agrees with an exhaustive grid") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(52), cam);
    const DepthMap distorted = shifted_fixture(render, 0.45, cam);

    const RecoveryResult fast = recover_shift(distorted, cam);

    // brute-force oracle: the same objective evaluated on a 1e-3 grid
    ShiftRecoveryOptions fine;
    fine.search.coarse_step = 1e-3;
    fine.search.tolerance = 1e-3; // refinement adds nothing at this grid
    const RecoveryResult brute = recover_shift(distorted, cam, fine);
    CHECK(std::abs(fast.delta_d - brute.delta_d) <= 2e-3);
}

TEST_CASE("recovery results are deterministic and trace-monotone") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(53), cam);
    const DepthMap distorted = shifted_fixture(render, -0.2, cam);
    const RecoveryResult a = recover_shift(distorted, cam);
    const RecoveryResult b = recover_shift(distorted, cam);
    CHECK(a.delta_d == b.delta_d);
    REQUIRE(a.objective_trace.size() == b.objective_trace.size());
    for (size_t i = 0; i < a.objective_trace.size(); ++i) {
        CHECK(a.objective_trace[i] == b.objective_trace[i]);
        if (i > 0) CHECK(a.objective_trace[i].second < a.objective_trace[i - 1].second);
    }
}

TEST_CASE("scale equivariance: doubling the input leaves the correction unchanged") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(54), cam);
    const RecoveryResult base = recover_shift(normalize_unit(render.depth), cam);
    DepthMap doubled = render.depth;
    for (double &v : doubled.values.data) v *= 2.0; // exact in binary fp
    const RecoveryResult scaled = recover_shift(normalize_unit(doubled), cam);
    CHECK(base.delta_d == scaled.delta_d); // bitwise: normalization absorbs powers of two exactly

    DepthMap odd = render.depth;
    for (double &v : odd.values.data) v *= 3.7;
    const RecoveryResult odd_result = recover_shift(normalize_unit(odd), cam);
    CHECK(std::abs(odd_result.delta_d - base.delta_d) < 2e-4);
}

TEST_CASE("shift objective is positive away from the truth on a dense grid") {
    // box-free room: no occlusion boundaries, so every segment flattens
    // exactly at the true correction
    SceneConfig boxless;
    boxless.box_count = {0, 0};
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(55, boxless), cam);
    const DepthMap distorted = shifted_fixture(render, 0.25, cam);
    const RecoveryResult result = recover_shift(distorted, cam);
    // the improving trace must end at (or below) every coarse candidate value
    REQUIRE(!result.objective_trace.empty());
    const double best = result.objective_trace.back().second;
    CHECK(best < 1e-4); // flat point reached (within the refinement tolerance)
    for (const auto &[candidate, value] : result.objective_trace)
        if (std::abs(candidate - result.delta_d) > 0.05) CHECK(value > best + 1e-6);
}

TEST_CASE("recover_shift needs two oblique segments") {
    // fronto-parallel wall only: no shift signal
    const CameraIntrinsics cam = default_scene_camera();
    DepthMap wall(cam.height, cam.width, DepthUnit::Normalized);
    for (size_t i = 0; i < wall.mask.size(); ++i) {
        wall.values.data[i] = 0.5;
        wall.mask.data[i] = 1;
    }
    CHECK_THROWS_AS(recover_shift(wall, cam), NumericalError);
}

TEST_CASE("recover_focal is the identity on undistorted Manhattan scenes") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(56), cam);
    const DepthMap normalized = normalize_scale(render.depth);
    const RecoveryResult result = recover_focal(normalized, cam);
    CHECK(std::abs(result.alpha_f - 1.0) <= 0.01);
}

TEST_CASE("recover_focal compensates a planted focal scale") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(57), cam);
    const DepthMap normalized = normalize_scale(render.depth);
    const double alpha_true = 0.8;
    const DistortedDepth distorted =
        distort_depth(normalized, cam, {0.0, alpha_true}, DistortionMode::Focal);
    const RecoveryResult result = recover_focal(distorted.depth, distorted.cam);
    CHECK(std::abs(result.alpha_f - alpha_true) / alpha_true <= 0.03);
    // dividing the distorted focal by alpha restores the true focal
    CHECK(std::abs(distorted.cam.f / result.alpha_f - cam.f) / cam.f <= 0.03);
}

TEST_CASE("focal recovery never alters per-segment plane rms") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(58), cam);
    const DepthMap normalized = normalize_scale(render.depth);
    const RecoveryResult result = recover_focal(normalized, cam);

    double max_before = 0.0, max_after = 0.0;
    plane_rms_per_label(normalized, cam, render.labels, 300, 0.0, &max_before);
    CameraIntrinsics corrected = cam;
    corrected.f = cam.f / result.alpha_f;
    plane_rms_per_label(normalized, corrected, render.labels, 300, 0.0, &max_after);
    CHECK(std::abs(max_after - max_before) < 1e-9);
}

TEST_CASE("recover_focal rejects all-parallel structure") {
    const CameraIntrinsics cam = default_scene_camera();
    DepthMap two_walls(cam.height, cam.width, DepthUnit::Normalized);
    for (int r = 0; r < cam.height; ++r)
        for (int c = 0; c < cam.width; ++c) {
            two_walls.values.at(r, c) = c < cam.width / 2 ? 0.4 : 0.9;
            two_walls.mask.at(r, c) = 1;
        }
    CHECK_THROWS_AS(recover_focal(two_walls, cam), NumericalError);
}

TEST_CASE("initialization sweep: recovered absolute focal varies within 5 percent") {
    const CameraIntrinsics render_cam = default_scene_camera(); // true FOV 60
    const RenderResult render = render_depth(generate_scene(59), render_cam);
    const DepthMap normalized = normalize_scale(render.depth);

    FocalRecoveryOptions wide;
    wide.search = {0.2, 5.0, 0.02, 1e-4}; // the sweep needs init/true ratios up to ~3.3
    std::vector<double> recovered;
    for (double fov : {20.0, 30.0, 40.0, 50.0, 60.0, 70.0}) {
        const CameraIntrinsics cam_init = CameraIntrinsics::from_fov(fov, 128, 128);
        const RecoveryResult result = recover_focal(normalized, cam_init, wide);
        recovered.push_back(cam_init.f / result.alpha_f);
    }
    const auto [lo, hi] = std::minmax_element(recovered.begin(), recovered.end());
    CHECK((*hi - *lo) / *hi <= 0.05);
    // and the absolute focal is the render camera's
    for (double f : recovered) CHECK(std::abs(f - render_cam.f) / render_cam.f < 0.05);
}

TEST_CASE("reconstruct_scene repairs affine corruption and a wrong FOV") {
    const CameraIntrinsics true_cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(60), true_cam);

    DepthMap corrupted = render.depth;
    for (double &v : corrupted.values.data) v = 1.7 * v + 0.9;
    corrupted.unit = DepthUnit::Affine;

    const CameraIntrinsics guess = CameraIntrinsics::from_fov(45.0, 128, 128);
    const SceneReconstruction rec = reconstruct_scene(corrupted, guess);

    // per-label plane flatness of the reconstructed cloud
    double max_rms = 0.0;
    plane_rms_per_label(rec.corrected_depth, rec.corrected_cam, render.labels, 300, 0.0, &max_rms);
    CHECK(max_rms < 5e-3);

    // wall angles restored to 90 degrees
    Grid<Eigen::Vector3d> pts;
    Grid<uint8_t> valid;
    unproject_grid(rec.corrected_depth, rec.corrected_cam, pts, valid);
    std::map<int, std::vector<Eigen::Vector3d>> groups;
    for (int i = 0; i < static_cast<int>(render.labels.size()); ++i)
        if (valid[i]) groups[render.labels[i]].push_back(pts[i]);
    const auto surfaces = scene_surface_planes(generate_scene(60));
    std::vector<std::pair<int, Eigen::Vector3d>> fitted;
    for (const auto &[label, group] : groups)
        if (group.size() >= 300) fitted.push_back({label, fit_plane(group).normal});
    int right_angle_pairs = 0;
    for (size_t i = 0; i < fitted.size(); ++i)
        for (size_t j = i + 1; j < fitted.size(); ++j) {
            const double true_dot =
                std::abs(surfaces[static_cast<size_t>(fitted[i].first)].normal.dot(
                    surfaces[static_cast<size_t>(fitted[j].first)].normal));
            if (true_dot > 1e-9) continue;
            const double angle =
                std::acos(std::min(1.0, std::abs(fitted[i].second.dot(fitted[j].second)))) *
                180.0 / M_PI;
            CHECK(std::abs(angle - 90.0) <= 1.0);
            ++right_angle_pairs;
        }
    CHECK(right_angle_pairs >= 1);

    // focal correction undoes the 45-degree guess against the 60-degree truth
    CHECK(std::abs(rec.corrected_cam.f - true_cam.f) / true_cam.f < 0.05);
}

TEST_CASE("wall-only scene surfaces the documented failure mode") {
    // a single gently tilted wall fills the view: one fronto-parallel-ish
    // segment, nothing oblique to work with
    const CameraIntrinsics cam = default_scene_camera();
    DepthMap wall(cam.height, cam.width, DepthUnit::Metric);
    for (int r = 0; r < cam.height; ++r)
        for (int c = 0; c < cam.width; ++c) {
            wall.values.at(r, c) = 3.0 + 1e-3 * r / cam.height;
            wall.mask.at(r, c) = 1;
        }
    CHECK_THROWS_AS(reconstruct_scene(wall, cam), NumericalError);
}

} // TEST_SUITE
