#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthshape/geometry_sampling.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

enum class AlignMode : uint8_t { None, Scale, ScaleShift };

std::string to_string(AlignMode mode);
AlignMode align_mode_from_string(const std::string &name);

struct AbsRelResult {
    double absrel = 0.0;
    double delta1 = 0.0; // percentages in [0, 100]
    double delta2 = 0.0;
    double delta3 = 0.0;
    int pixels = 0;
    AlignMode align = AlignMode::None;
};

/// AbsRel and threshold accuracies after optional least-squares alignment
/// (scale-only: s = sum(p * g) / sum(p^2); scale+shift via align_scale_shift).
/// Aligned depths below the clamp floor (1e-8) are clamped before ratios.
AbsRelResult absrel_delta(const DepthMap &pred, const DepthMap &gt, AlignMode align);

/// Scale-invariant RMSE: RMSE of log d - log d* after removing the mean log
/// ratio. Non-positive values are masked out; empty remainder is an error.
double si_rmse(const DepthMap &pred, const DepthMap &gt);

struct OrdinalPair {
    int a = 0; // row-major linear pixel indices
    int b = 0;
    int8_t label = 0; // ground truth: +1 a farther, -1 b farther, 0 equal
};

/// Weighted Human Disagreement Rate (uniform weights), in percent. Predicted
/// labels use the same tau-ratio rule as the ranking loss.
double whdr(const DepthMap &pred, std::span<const OrdinalPair> pairs, double tau = 0.02);

/// Locally Scale-Invariant RMSE over externally supplied regions (pixel index
/// sets): a best scale is fit per region, the RMSE is taken over all region
/// pixels. Regions with all-zero predictions are skipped and counted.
double lsiv(const DepthMap &pred, const DepthMap &gt, std::span<const std::vector<int>> regions,
            int *skipped_regions = nullptr);

struct DbeResult {
    std::optional<double> acc;  // absent when the prediction has no edges
    std::optional<double> comp; // absent when the ground truth has no edges
};

/// Depth boundary errors: truncated chamfer distances between binary depth
/// edges (Sobel, shared thresholds with geometry_sampling).
DbeResult dbe(const DepthMap &pred, const DepthMap &gt, double max_dist = 10.0);

/// Kernel over precomputed binary edge maps.
DbeResult dbe_from_edges(const Grid<uint8_t> &pred_edges, const Grid<uint8_t> &gt_edges,
                         double max_dist);

/// Exact Euclidean distance transform (distance to the nearest nonzero pixel).
Grid<double> distance_transform(const Grid<uint8_t> &binary);

struct PeResult {
    double plan_cm = 0.0;  // mean per-region std of point-to-own-plane distances
    double orie_deg = 0.0; // mean angle between predicted and true plane normals
    int regions_used = 0;
    int skipped = 0;
};

/// Planarity errors over plane regions: scale+shift alignment first, then
/// plane fits on the un-projected predicted and true points per region.
PeResult pe(const DepthMap &pred, const DepthMap &gt, const CameraIntrinsics &cam,
            std::span<const std::vector<int>> regions);

struct MetricsReport {
    std::optional<double> absrel, delta1, delta2, delta3;
    std::optional<double> rmse, mae, si_rmse, whdr, lsiv;
    std::optional<double> dbe_acc, dbe_comp, pe_plan, pe_orie;
    int pixels = 0;
    AlignMode align = AlignMode::None;
};

/// Full report for a prediction/ground-truth pair; pair and region metrics are
/// filled when their inputs are supplied.
MetricsReport evaluate_depth(const DepthMap &pred, const DepthMap &gt, AlignMode align,
                             std::span<const OrdinalPair> pairs = {},
                             std::span<const std::vector<int>> regions = {},
                             const CameraIntrinsics *cam = nullptr);

std::string metrics_to_csv(const MetricsReport &report);
std::string metrics_to_text(const MetricsReport &report);

} // namespace depthshape
