#include "depthshape/scene_synth.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>

namespace depthshape {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
constexpr int kFacesPerBox = 6;
} // namespace

Eigen::Matrix3d CameraPose::rotation() const {
    Eigen::Vector3d right(1, 0, 0);
    Eigen::Vector3d down(0, 0, -1);
    Eigen::Vector3d forward(0, 1, 0);
    const Eigen::Matrix3d yaw = Eigen::AngleAxisd(yaw_rad, Eigen::Vector3d::UnitZ()).matrix();
    right = yaw * right;
    down = yaw * down;
    forward = yaw * forward;
    const Eigen::Matrix3d pitch = Eigen::AngleAxisd(pitch_rad, right).matrix();
    down = pitch * down;
    forward = pitch * forward;
    const Eigen::Matrix3d roll = Eigen::AngleAxisd(roll_rad, forward).matrix();
    right = roll * right;
    down = roll * down;
    Eigen::Matrix3d rot;
    rot.col(0) = right;
    rot.col(1) = down;
    rot.col(2) = forward;
    return rot;
}

CameraIntrinsics default_scene_camera() { return CameraIntrinsics::from_fov(60.0, 128, 128); }

std::vector<ScenePlane> scene_surface_planes(const SyntheticScene &scene) {
    std::vector<ScenePlane> planes;
    planes.reserve(6 + kFacesPerBox * scene.boxes.size());
    const Eigen::Vector3d &lo = scene.room_min;
    const Eigen::Vector3d &hi = scene.room_max;
    planes.push_back({{0, 0, 1}, lo.z()});  // floor
    planes.push_back({{0, 0, -1}, -hi.z()}); // ceiling
    planes.push_back({{1, 0, 0}, lo.x()});
    planes.push_back({{-1, 0, 0}, -hi.x()});
    planes.push_back({{0, 1, 0}, lo.y()});
    planes.push_back({{0, -1, 0}, -hi.y()});
    for (const SceneBox &box : scene.boxes) {
        // outward normals; face order: x-min, x-max, y-min, y-max, z-min, z-max
        planes.push_back({{-1, 0, 0}, -box.min.x()});
        planes.push_back({{1, 0, 0}, box.max.x()});
        planes.push_back({{0, -1, 0}, -box.min.y()});
        planes.push_back({{0, 1, 0}, box.max.y()});
        planes.push_back({{0, 0, -1}, -box.min.z()});
        planes.push_back({{0, 0, 1}, box.max.z()});
    }
    return planes;
}

namespace {

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    int label = -1;
    Eigen::Vector3d world_normal = Eigen::Vector3d::Zero();
};

/// Exit of a ray starting inside the room box.
RayHit room_exit(const SyntheticScene &scene, const Eigen::Vector3d &origin,
                 const Eigen::Vector3d &dir) {
    RayHit hit;
    for (int axis = 0; axis < 3; ++axis) {
        const double d = dir(axis);
        if (d == 0.0) continue;
        const double bound = d > 0.0 ? scene.room_max(axis) : scene.room_min(axis);
        const double t = (bound - origin(axis)) / d;
        if (t > 0.0 && t < hit.t) {
            hit.t = t;
            // room labels: floor 0 (z-min), ceiling 1 (z-max), x-min 2, x-max 3, y-min 4, y-max 5
            if (axis == 2) hit.label = d > 0.0 ? 1 : 0;
            else if (axis == 0) hit.label = d > 0.0 ? 3 : 2;
            else hit.label = d > 0.0 ? 5 : 4;
            Eigen::Vector3d n = Eigen::Vector3d::Zero();
            n(axis) = d > 0.0 ? -1.0 : 1.0; // interior-facing
            hit.world_normal = n;
        }
    }
    return hit;
}

/// Slab entry test for a box the ray starts outside of.
bool box_entry(const SceneBox &box, const Eigen::Vector3d &origin, const Eigen::Vector3d &dir,
               double &t_entry, int &face) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int near_axis = -1;
    bool near_from_min = false;
    for (int axis = 0; axis < 3; ++axis) {
        const double d = dir(axis);
        if (d == 0.0) {
            if (origin(axis) < box.min(axis) || origin(axis) > box.max(axis)) return false;
            continue;
        }
        double t1 = (box.min(axis) - origin(axis)) / d;
        double t2 = (box.max(axis) - origin(axis)) / d;
        bool from_min = d > 0.0;
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > t_near) {
            t_near = t1;
            near_axis = axis;
            near_from_min = from_min;
        }
        if (t2 < t_far) t_far = t2;
        if (t_near > t_far) return false;
    }
    if (near_axis < 0 || t_near <= 1e-12) return false;
    t_entry = t_near;
    face = near_axis * 2 + (near_from_min ? 0 : 1); // x-min,x-max,y-min,y-max,z-min,z-max
    return true;
}

Eigen::Vector3d box_face_normal(int face) {
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    n(face / 2) = (face % 2 == 0) ? -1.0 : 1.0;
    return n;
}

bool point_in_box(const Eigen::Vector3d &p, const SceneBox &box, double margin) {
    for (int axis = 0; axis < 3; ++axis)
        if (p(axis) < box.min(axis) - margin || p(axis) > box.max(axis) + margin) return false;
    return true;
}

std::vector<ScenePlane> room_planes(const Eigen::Vector3d &lo, const Eigen::Vector3d &hi) {
    return {{{0, 0, 1}, lo.z()},   {{0, 0, -1}, -hi.z()}, {{1, 0, 0}, lo.x()},
            {{-1, 0, 0}, -hi.x()}, {{0, 1, 0}, lo.y()},   {{0, -1, 0}, -hi.y()}};
}

} // namespace

RenderResult render_depth(const SyntheticScene &scene, const CameraIntrinsics &cam) {
    cam.validate();
    RenderResult out;
    out.depth = DepthMap(cam.height, cam.width, DepthUnit::Metric);
    out.labels = Grid<int>(cam.height, cam.width, -1);
    out.normals = NormalMap(cam.height, cam.width);

    const Eigen::Matrix3d rot = scene.camera.rotation();
    const Eigen::Matrix3d rot_t = rot.transpose();
    const Eigen::Vector3d origin = scene.camera.position;

    for (int r = 0; r < cam.height; ++r) {
        for (int c = 0; c < cam.width; ++c) {
            const Eigen::Vector3d dir_cam((c - cam.u0) / cam.f, (r - cam.v0) / cam.f, 1.0);
            const Eigen::Vector3d dir = rot * dir_cam;
            RayHit hit = room_exit(scene, origin, dir);
            for (size_t b = 0; b < scene.boxes.size(); ++b) {
                double t_entry;
                int face;
                if (box_entry(scene.boxes[b], origin, dir, t_entry, face) && t_entry < hit.t) {
                    hit.t = t_entry;
                    hit.label = 6 + kFacesPerBox * static_cast<int>(b) + face;
                    hit.world_normal = box_face_normal(face);
                }
            }
            if (hit.label < 0)
                throw NumericalError("render_depth: ray escaped the closed room (invalid scene)");
            // depth equals the ray parameter because dir_cam.z == 1
            out.depth.values.at(r, c) = hit.t;
            out.depth.mask.at(r, c) = 1;
            out.labels.at(r, c) = hit.label;
            out.normals.normals.at(r, c) = orient_normal(rot_t * hit.world_normal);
            out.normals.mask.at(r, c) = 1;
        }
    }
    return out;
}

namespace {

double draw_signed_magnitude(Rng &rng, const std::array<double, 2> &range_deg) {
    const double mag = rng.uniform(range_deg[0], range_deg[1]);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return sign * mag * kDegToRad;
}

/// Count planes that are both sufficiently visible and oblique to the image
/// plane at the probe camera.
int count_visible_oblique_planes(const SyntheticScene &scene, const SceneConfig &config) {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(scene, cam);
    const std::vector<ScenePlane> surfaces = scene_surface_planes(scene);
    std::vector<int> pixel_count(surfaces.size(), 0);
    for (int label : render.labels.data)
        if (label >= 0) ++pixel_count[static_cast<size_t>(label)];
    const Eigen::Matrix3d rot_t = scene.camera.rotation().transpose();
    int oblique = 0;
    for (size_t i = 0; i < surfaces.size(); ++i) {
        if (pixel_count[i] < config.min_visible_pixels) continue;
        const Eigen::Vector3d n_cam = rot_t * surfaces[i].normal;
        if (std::abs(n_cam.z()) < 0.95) ++oblique;
    }
    return oblique;
}

} // namespace

SyntheticScene generate_scene(uint64_t seed, const SceneConfig &config) {
    if (config.room_width[0] > config.room_width[1] || config.room_depth[0] > config.room_depth[1] ||
        config.room_height[0] > config.room_height[1] || config.box_count[0] > config.box_count[1])
        throw ConfigError("generate_scene: empty config range");

    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        Rng rng(Rng::derive_seed(seed, static_cast<uint64_t>(attempt)));
        SyntheticScene scene;
        scene.seed = seed;
        const double w = rng.uniform(config.room_width[0], config.room_width[1]);
        const double d = rng.uniform(config.room_depth[0], config.room_depth[1]);
        const double h = rng.uniform(config.room_height[0], config.room_height[1]);
        scene.room_min = Eigen::Vector3d::Zero();
        scene.room_max = Eigen::Vector3d(w, d, h);
        scene.planes = room_planes(scene.room_min, scene.room_max);

        const double m = config.wall_margin;
        if (w <= 2 * m || d <= 2 * m) throw ConfigError("generate_scene: room smaller than margins");
        CameraPose pose;
        pose.position = Eigen::Vector3d(
            rng.uniform(m, w - m), rng.uniform(m, d - m),
            rng.uniform(config.camera_height[0], std::min(config.camera_height[1], h - 0.3)));
        pose.yaw_rad = draw_signed_magnitude(rng, config.yaw_deg);
        pose.pitch_rad = draw_signed_magnitude(rng, config.pitch_deg);
        pose.roll_rad = draw_signed_magnitude(rng, config.roll_deg);
        scene.camera = pose;

        const int n_boxes =
            static_cast<int>(rng.uniform_int(config.box_count[0], config.box_count[1]));
        bool placement_ok = true;
        for (int b = 0; b < n_boxes; ++b) {
            const double sx = rng.uniform(config.box_size[0], config.box_size[1]);
            const double sy = rng.uniform(config.box_size[0], config.box_size[1]);
            const double sz = rng.uniform(config.box_size[0], config.box_size[1]);
            if (sx >= w - 0.4 || sy >= d - 0.4) continue; // box cannot fit, skip it
            SceneBox box;
            const double bx = rng.uniform(0.2, w - 0.2 - sx);
            const double by = rng.uniform(0.2, d - 0.2 - sy);
            box.min = Eigen::Vector3d(bx, by, 0.0);
            box.max = Eigen::Vector3d(bx + sx, by + sy, std::min(sz, h - 0.5));
            if (point_in_box(pose.position, box, 0.3)) {
                placement_ok = false;
                break;
            }
            scene.boxes.push_back(box);
        }
        if (!placement_ok) continue;
        if (count_visible_oblique_planes(scene, config) >= config.min_oblique_planes) return scene;
    }
    throw ConfigError("generate_scene: could not satisfy scene invariants after " +
                      std::to_string(config.max_attempts) + " attempts");
}

PerturbationSample sample_perturbation(Rng &rng) {
    PerturbationSample p;
    p.delta_d = rng.uniform(-0.25, 0.8);
    p.alpha_f = rng.uniform(0.6, 1.25);
    return p;
}

namespace {

void require_normalized(const DepthMap &depth, const char *op) {
    if (depth.unit != DepthUnit::Normalized)
        throw DataError(std::string(op) + ": input depth must carry the normalized unit tag");
}

} // namespace

DistortedDepth distort_depth(const DepthMap &normalized, const CameraIntrinsics &cam,
                             const PerturbationSample &p, DistortionMode mode) {
    require_normalized(normalized, "distort_depth");
    cam.validate();
    DistortedDepth out;
    out.cam = cam;
    out.depth = normalized;
    if (mode == DistortionMode::Shift) {
        if (p.delta_d == 0.0) return out; // exact identity, including depth-0 pixels
        for (int r = 0; r < out.depth.height(); ++r) {
            for (int c = 0; c < out.depth.width(); ++c) {
                if (!out.depth.valid(r, c)) continue;
                const double shifted = out.depth.values.at(r, c) + p.delta_d;
                if (shifted <= 0.0) {
                    out.depth.mask.at(r, c) = 0;
                    out.depth.values.at(r, c) = 0.0;
                    ++out.masked_pixels;
                } else {
                    out.depth.values.at(r, c) = shifted;
                }
            }
        }
    } else {
        out.cam.f = p.alpha_f * cam.f;
        out.cam.validate();
    }
    return out;
}

DistortionResult apply_distortion(const DepthMap &normalized, const CameraIntrinsics &cam,
                                  const PerturbationSample &p, DistortionMode mode) {
    const DistortedDepth distorted = distort_depth(normalized, cam, p, mode);
    DistortionResult out;
    out.masked_pixels = distorted.masked_pixels;
    out.cloud = unproject(distorted.depth, distorted.cam);
    return out;
}

std::string scene_to_json(const SyntheticScene &scene) {
    nlohmann::json j;
    j["format"] = "depthshape.scene";
    j["version"] = 1;
    j["seed"] = scene.seed;
    j["room_min"] = {scene.room_min.x(), scene.room_min.y(), scene.room_min.z()};
    j["room_max"] = {scene.room_max.x(), scene.room_max.y(), scene.room_max.z()};
    nlohmann::json planes = nlohmann::json::array();
    for (const ScenePlane &p : scene.planes)
        planes.push_back({{"normal", {p.normal.x(), p.normal.y(), p.normal.z()}},
                          {"offset", p.offset}});
    j["planes"] = planes;
    nlohmann::json boxes = nlohmann::json::array();
    for (const SceneBox &b : scene.boxes)
        boxes.push_back({{"min", {b.min.x(), b.min.y(), b.min.z()}},
                         {"max", {b.max.x(), b.max.y(), b.max.z()}}});
    j["boxes"] = boxes;
    j["camera"] = {{"position",
                    {scene.camera.position.x(), scene.camera.position.y(),
                     scene.camera.position.z()}},
                   {"yaw_rad", scene.camera.yaw_rad},
                   {"pitch_rad", scene.camera.pitch_rad},
                   {"roll_rad", scene.camera.roll_rad}};
    return j.dump(2);
}

SyntheticScene scene_from_json(const std::string &text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw DataError(std::string("scene_from_json: ") + e.what());
    }
    if (j.value("format", "") != "depthshape.scene" || j.value("version", 0) != 1)
        throw DataError("scene_from_json: unsupported format/version");
    SyntheticScene scene;
    scene.seed = j.at("seed").get<uint64_t>();
    auto vec3 = [](const nlohmann::json &a) {
        return Eigen::Vector3d(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
    };
    scene.room_min = vec3(j.at("room_min"));
    scene.room_max = vec3(j.at("room_max"));
    scene.planes = room_planes(scene.room_min, scene.room_max);
    for (const auto &b : j.at("boxes")) scene.boxes.push_back({vec3(b.at("min")), vec3(b.at("max"))});
    const auto &cam = j.at("camera");
    scene.camera.position = vec3(cam.at("position"));
    scene.camera.yaw_rad = cam.at("yaw_rad").get<double>();
    scene.camera.pitch_rad = cam.at("pitch_rad").get<double>();
    scene.camera.roll_rad = cam.at("roll_rad").get<double>();
    return scene;
}

} // namespace depthshape
