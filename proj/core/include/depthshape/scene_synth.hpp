#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "depthshape/camera_geometry.hpp"
#include "depthshape/rng.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

/// World frame: X east, Y north, Z up. Camera frame: x right, y down,
/// z forward (matches the un-projection frame).
struct CameraPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double yaw_rad = 0.0;   // about world Z
    double pitch_rad = 0.0; // about the camera right axis, positive = up
    double roll_rad = 0.0;  // about the camera forward axis

    /// Camera-to-world rotation; columns are (right, down, forward) in world.
    Eigen::Matrix3d rotation() const;
};

/// Boundary plane in world coordinates, normal pointing into the viewed
/// half-space: n . p = offset for points on the plane.
struct ScenePlane {
    Eigen::Vector3d normal = Eigen::Vector3d(0, 0, 1);
    double offset = 0.0;
};

struct SceneBox {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();
};

/// Closed axis-aligned room (floor, ceiling, 4 walls) plus 0-4 axis-aligned
/// boxes standing on the floor; all surfaces inherit the room axes.
struct SyntheticScene {
    Eigen::Vector3d room_min = Eigen::Vector3d::Zero();
    Eigen::Vector3d room_max = Eigen::Vector3d::Zero();
    std::vector<ScenePlane> planes; // the 6 room boundary planes, interior-facing
    std::vector<SceneBox> boxes;
    CameraPose camera;
    uint64_t seed = 0;
};

struct SceneConfig {
    std::array<double, 2> room_width{3.0, 8.0};  // X extent, meters
    std::array<double, 2> room_depth{3.0, 8.0};  // Y extent
    std::array<double, 2> room_height{2.4, 3.5}; // Z extent
    std::array<int, 2> box_count{0, 4};
    std::array<double, 2> box_size{0.4, 1.6};
    std::array<double, 2> pitch_deg{5.0, 25.0}; // magnitude; sign drawn at random
    std::array<double, 2> yaw_deg{10.0, 40.0};  // magnitude; sign drawn at random
    std::array<double, 2> roll_deg{0.0, 5.0};   // magnitude; sign drawn at random
    double wall_margin = 0.5;    // camera clearance from walls
    std::array<double, 2> camera_height{1.2, 1.9};
    int max_attempts = 64;
    int min_oblique_planes = 2;  // visibility requirement checked on a probe render
    int min_visible_pixels = 50; // per plane, at the 128x128 probe resolution
};

/// Camera used for the generation-time visibility probe (and the project's
/// default render setup): 128x128, FOV 60 degrees.
CameraIntrinsics default_scene_camera();

/// Deterministic scene generation: identical seeds give bitwise-identical
/// scenes. Guarantees at least `min_oblique_planes` non-fronto-parallel planes
/// visible from the scene camera; throws ConfigError when the config cannot be
/// satisfied within max_attempts.
SyntheticScene generate_scene(uint64_t seed, const SceneConfig &config = {});

struct RenderResult {
    DepthMap depth;        // exact ray-intersection depth, unit Metric
    Grid<int> labels;      // supporting surface per pixel (see scene_surface_planes)
    NormalMap normals;     // analytic normals in the camera frame, z <= 0 convention
};

/// Exact per-pixel ray casting against the room and box faces. Every ray hits
/// a surface (the room is closed), so the output mask is all-valid.
RenderResult render_depth(const SyntheticScene &scene, const CameraIntrinsics &cam);

/// World-frame plane parameters indexed by render label: 0-5 the room faces
/// (floor, ceiling, x-min, x-max, y-min, y-max walls), then 6 per box.
std::vector<ScenePlane> scene_surface_planes(const SyntheticScene &scene);

/// Shift / focal perturbation drawn from the training distributions
/// delta_d ~ U(-0.25, 0.8), alpha_f ~ U(0.6, 1.25); delta is drawn first.
struct PerturbationSample {
    double delta_d = 0.0;
    double alpha_f = 1.0;
};

PerturbationSample sample_perturbation(Rng &rng);

enum class DistortionMode { Shift, Focal };

struct DistortionResult {
    PointCloud cloud;
    int masked_pixels = 0; // shift pushed these below zero depth
};

/// Distort a normalized depth map by exactly one factor: shift mode
/// un-projects (d + delta_d, f), focal mode un-projects (d, alpha_f * f).
DistortionResult apply_distortion(const DepthMap &normalized, const CameraIntrinsics &cam,
                                  const PerturbationSample &p, DistortionMode mode);

/// Raster form of the same distortion, for recovery inputs and file fixtures:
/// shift mode returns the shifted depth map (camera unchanged), focal mode
/// returns the original depth with the scaled focal length.
struct DistortedDepth {
    DepthMap depth;
    CameraIntrinsics cam;
    int masked_pixels = 0;
};

DistortedDepth distort_depth(const DepthMap &normalized, const CameraIntrinsics &cam,
                             const PerturbationSample &p, DistortionMode mode);

/// Versioned JSON text serialization for fixture reuse.
std::string scene_to_json(const SyntheticScene &scene);
SyntheticScene scene_from_json(const std::string &text);

} // namespace depthshape
