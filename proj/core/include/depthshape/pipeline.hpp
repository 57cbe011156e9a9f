#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "depthshape/types.hpp"

namespace depthshape {

/// Effective run parameters: flags > config file > the defaults below, which
/// mirror the library-level defaults. The effective configuration is echoed
/// next to every command's outputs.
struct RunConfig {
    uint64_t seed = 0;
    std::filesystem::path out = ".";
    std::filesystem::path input;  // command-dependent primary input
    std::filesystem::path gt;     // eval: ground truth depth
    std::filesystem::path camera; // optional camera JSON

    // synth
    int count = 1;
    int width = 128;
    int height = 128;
    double fov_deg = 60.0;

    // distort / recover
    std::string mode = "shift"; // shift | focal | full
    double fov_init_deg = 60.0;
    double shift_lo = -0.8, shift_hi = 0.8, shift_step = 0.01, shift_tol = 1e-4;
    double focal_lo = 0.5, focal_hi = 2.0, focal_step = 0.02, focal_tol = 1e-4;
    double cluster_eps = 0.05;
    int cluster_min_pts = 50;
    int normal_window = 3;

    // losses
    double sr_tau = 0.02;
    int msg_scales = 4;
    int grad_fixtures = 20;
    double grad_tol = 1e-5;

    // complete
    std::string pattern = "uniform";
    int pattern_count = 500;
    double pattern_quantile = 0.5;
    double border_fraction = 0.25;
    int tof_downsample = 8;
    double tof_far_quantile = 0.9;
    int lidar_lines = 4;
    double fast_threshold = 0.1;
    double outlier_fraction = 0.0;
    double prior_scale = 1.0; // prior = (gt - prior_shift) / prior_scale
    double prior_shift = 0.0;

    // eval
    std::string align = "scale_shift";
};

/// JSON round-trip for config files and the effective-config echo.
std::string config_to_json(const RunConfig &config);
void apply_config_json(RunConfig &config, const std::string &json_text);

/// FNV-1a hash of the canonical config serialization.
uint64_t config_hash(const RunConfig &config);

/// Camera JSON helpers (f, u0, v0, width, height).
std::string camera_to_json(const CameraIntrinsics &cam);
CameraIntrinsics camera_from_json(const std::string &text);

void cmd_synth(const RunConfig &config);
void cmd_distort(const RunConfig &config);
void cmd_recover(const RunConfig &config);
void cmd_complete(const RunConfig &config);
void cmd_eval(const RunConfig &config);
void cmd_losses(const RunConfig &config);

/// Dispatch a command by name; writes a manifest on success and a
/// machine-readable error record on failure. Returns the process exit code
/// (0 success, 2 config error, 3 data error, 4 numerical failure).
int run_pipeline(const std::string &command, const RunConfig &config);

} // namespace depthshape
