#pragma once

#include <span>
#include <vector>

#include "depthshape/camera_geometry.hpp"
#include "depthshape/rng.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

enum class EdgeSource : uint8_t { Image, Normal, Depth };

/// 3x3 Sobel response. `binary` thresholds the magnitude at
/// threshold_factor * (99th percentile of strength); gx/gy keep the dominant
/// signed gradient for pair sampling. Pixels whose 3x3 window leaves the valid
/// region carry zero strength.
struct EdgeMap {
    Grid<double> strength;
    Grid<double> gx;
    Grid<double> gy;
    Grid<uint8_t> binary;
    EdgeSource source = EdgeSource::Depth;
};

EdgeMap detect_edges(const DepthMap &depth, double threshold_factor = 0.1);
EdgeMap detect_edges(const NormalMap &normals, double threshold_factor = 0.1);
EdgeMap detect_edges_image(const Grid<double> &image, double threshold_factor = 0.1);

enum class PairLabel : uint8_t { EdgePositive, EdgeNegative, Coplanar };

struct PixelPair {
    int a = 0; // row-major linear pixel index
    int b = 0;
};

struct NormalPairRef {
    Eigen::Vector3d a;
    Eigen::Vector3d b;
};

/// Sampled point pairs with their labels and ground-truth normal pairs.
/// Labels are consistent with the sampling constraints at construction:
/// positives have n*_A . n*_B < positive_dot, negatives > negative_dot.
struct PointPairSet {
    std::vector<PixelPair> pairs;
    std::vector<PairLabel> labels;
    std::vector<NormalPairRef> gt_normals;

    size_t size() const { return pairs.size(); }
};

struct EdgePairOptions {
    int min_offset = 2; // pixels along the local gradient, each side
    int max_offset = 5;
    double positive_dot = 0.3;
    double negative_dot = 0.95;
    double balance_slack = 0.10; // majority downsampled to within this of the minority
};

/// Draw pairs straddling edge pixels along the local gradient direction.
/// Positives require the ground-truth normal dot below positive_dot; negatives
/// require it above negative_dot and the pixel present in `image_edges`
/// (or in `edges` itself when its source is Image). One class may be empty;
/// otherwise the majority class is downsampled to the balance slack.
PointPairSet sample_edge_pairs(const EdgeMap &edges, const NormalMap &gt_normals, int budget,
                               Rng &rng, const EdgeMap *image_edges = nullptr,
                               const EdgePairOptions &options = {});

/// Density-based clustering in (normal, plane-offset/diag) feature space;
/// clusters refit with fit_plane and segments below min_pts discarded.
/// Defaults are tuned for 128x128 inputs.
std::vector<PlaneSegment> cluster_planes(const NormalMap &normals, const DepthMap &depth,
                                         const CameraIntrinsics &cam, double eps = 0.05,
                                         int min_pts = 50);

/// Pairs drawn within single segments (label Coplanar, ground-truth dot exactly
/// 1); budget split across segments proportionally to pixel count (largest
/// remainder). Segments with fewer than 2 pixels are skipped.
PointPairSet sample_coplanar_pairs(std::span<const PlaneSegment> segments, int budget, Rng &rng);

/// Planar regions from an 8-bit label mask (nonzero value = region id), the
/// interchange form for externally provided planar masks. Planes are fitted
/// when depth and camera are supplied; otherwise segments carry membership
/// only with the default normal.
std::vector<PlaneSegment> segments_from_mask(const Grid<uint8_t> &mask,
                                             const DepthMap *depth = nullptr,
                                             const CameraIntrinsics *cam = nullptr);

} // namespace depthshape
