#include "depthshape/types.hpp"

#include <cmath>

namespace depthshape {

std::string to_string(DepthUnit unit) {
    switch (unit) {
    case DepthUnit::Metric: return "metric";
    case DepthUnit::Normalized: return "normalized";
    case DepthUnit::Affine: return "affine";
    }
    return "metric";
}

DepthUnit depth_unit_from_string(const std::string &name) {
    if (name == "metric") return DepthUnit::Metric;
    if (name == "normalized") return DepthUnit::Normalized;
    if (name == "affine") return DepthUnit::Affine;
    throw DataError("unknown depth unit tag: " + name);
}

CameraIntrinsics CameraIntrinsics::from_fov(double fov_deg, int width, int height) {
    CameraIntrinsics cam;
    cam.width = width;
    cam.height = height;
    cam.u0 = (width - 1) / 2.0;
    cam.v0 = (height - 1) / 2.0;
    cam.f = (width / 2.0) / std::tan(fov_deg * M_PI / 360.0);
    cam.validate();
    return cam;
}

void CameraIntrinsics::validate() const {
    if (width <= 0 || height <= 0)
        throw ConfigError("camera: image size must be positive");
    if (!(f > 0.0) || !std::isfinite(f))
        throw ConfigError("camera: focal length must be positive and finite");
    if (u0 < 0.0 || u0 >= width || v0 < 0.0 || v0 >= height)
        throw ConfigError("camera: principal point outside image bounds");
}

int DepthMap::valid_count() const {
    int n = 0;
    for (uint8_t m : mask.data) n += (m != 0);
    return n;
}

std::vector<double> DepthMap::valid_values() const {
    std::vector<double> out;
    out.reserve(mask.size());
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask.data[i]) out.push_back(values.data[i]);
    return out;
}

} // namespace depthshape
