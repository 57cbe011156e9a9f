#pragma once

#include <utility>
#include <vector>

#include "depthshape/geometry_sampling.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

/// Min-max normalization over valid pixels: (d - min) / (max - min), tagged
/// Normalized. Throws NumericalError for constant maps. Note this absorbs any
/// positive affine transform of the input, including the input's own depth
/// shift; the residual shift min/(max - min) relative to the metric-
/// proportional map is exactly what recover_shift finds afterwards.
DepthMap normalize_unit(const DepthMap &depth);

/// Scale-only normalization d / max (range (0, 1] for positive maps), tagged
/// Normalized. Unlike min-max this preserves planarity of the un-projection,
/// so a depth shift planted on top of it is the unique flatness-restoring
/// correction; distortion fixtures are built this way.
DepthMap normalize_scale(const DepthMap &depth);

struct SearchRange {
    double lo = 0.0;
    double hi = 0.0;
    double coarse_step = 0.0;
    double tolerance = 1e-4;
};

struct RecoveryResult {
    double delta_d = 0.0;
    double alpha_f = 1.0;
    /// Accepted (candidate, objective) pairs, monotone improving.
    std::vector<std::pair<double, double>> objective_trace;
    int segments_used = 0;
};

struct ShiftRecoveryOptions {
    SearchRange search{-0.8, 0.8, 0.01, 1e-4};
    double cluster_eps = 0.05;
    int cluster_min_pts = 50;
    double oblique_max_abs_nz = 0.95; // segments flatter than this are fronto-parallel
    int normal_window = 3;
    /// Segments thinner than this (smaller principal pixel std, strip width)
    /// are dropped when positive. Off by default for shift recovery: curved
    /// walls on heavily bent clouds legitimately fragment into strips, and
    /// discontinuity strips are stationary at the flat point anyway.
    int min_extent_px = 0;
    bool refit_memberships = false; // recluster at every coarse candidate
};

/// Recover the additive depth correction that minimizes the summed plane-fit
/// rms over oblique plane segments of unproject(d + delta, f_init). Segment
/// memberships are frozen at delta = 0 (coarse grid then golden-section
/// refinement). Requires at least 2 oblique segments; otherwise throws
/// NumericalError (insufficient structure).
RecoveryResult recover_shift(const DepthMap &normalized, const CameraIntrinsics &cam_init,
                             const ShiftRecoveryOptions &options = {});

struct FocalRecoveryOptions {
    SearchRange search{0.5, 2.0, 0.02, 1e-4};
    double cluster_eps = 0.05;
    int cluster_min_pts = 50;
    int normal_window = 3;
    /// Strip-shaped segments are dropped: straight depth discontinuities form
    /// window-wide pseudo-planes that violate the Manhattan prior and bias
    /// the angle objective.
    int min_extent_px = 6;
    double distinct_angle_deg = 5.0; // precondition: some segment pair this far from parallel
};

/// Recover the focal scale under the Manhattan right-angle prior: candidates
/// alpha re-unproject with f_init / alpha, segment normals are refit on fixed
/// memberships, and the objective sums squared angular distances to {0, 90}
/// degrees over segment pairs, each pair weighted by the smaller segment's
/// pixel count. The corrected focal length is f_init / alpha (dividing f by
/// alpha undoes a cloud built with alpha * f). Throws NumericalError when all
/// segments are mutually parallel.
RecoveryResult recover_focal(const DepthMap &normalized, const CameraIntrinsics &cam_init,
                             const FocalRecoveryOptions &options = {});

struct ReconstructOptions {
    ShiftRecoveryOptions shift;
    FocalRecoveryOptions focal;
    /// Min-max normalization introduces its own depth shift min/(max - min),
    /// which can exceed the distortion-recovery default bounds. When the
    /// optimum saturates a search bound, the pipeline widens that side and
    /// retries, up to this magnitude.
    double max_shift_bound = 8.0;
};

struct SceneReconstruction {
    PointCloud cloud;
    DepthMap corrected_depth;
    CameraIntrinsics corrected_cam;
    RecoveryResult shift;
    RecoveryResult focal;
};

/// Full pipeline: normalize_unit, recover and apply the shift, recover the
/// focal scale, un-project with the corrected depth and camera.
SceneReconstruction reconstruct_scene(const DepthMap &depth, const CameraIntrinsics &cam_guess,
                                      const ReconstructOptions &options = {});

} // namespace depthshape
