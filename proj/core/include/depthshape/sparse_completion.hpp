#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "depthshape/rng.hpp"
#include "depthshape/types.hpp"

namespace depthshape {

/// Synthetic sparsity rule. Parameters are documented per kind; all generators
/// are deterministic given `seed`.
struct SparsityPattern {
    enum class Kind : uint8_t {
        Uniform,      // exactly `count` valid pixels, without replacement
        Features,     // FAST-9 corner pixels at `threshold` (depth units)
        PolygonHole,  // mask inside `vertices` (random 3-8 verts, 5-20% area when empty)
        DistanceHole, // mask valid pixels beyond the `quantile` depth
        UnpairedFov,  // strip a border band of width border_fraction per side
        SparseTof,    // keep a 1/downsample grid, drop sites beyond far_quantile
        ShortRange,   // mask the ceil(quantile * N) farthest pixels, ties by index
        LidarLines,   // keep `lines` evenly spaced scanrows
    };

    Kind kind = Kind::Uniform;
    uint64_t seed = 0;
    int count = 500;           // Uniform
    double threshold = 0.1;    // Features (FAST-9 segment-test threshold)
    std::vector<std::array<double, 2>> vertices; // PolygonHole, (row, col)
    double quantile = 0.5;     // DistanceHole / ShortRange
    double border_fraction = 0.25; // UnpairedFov
    int downsample = 8;        // SparseTof
    double far_quantile = 0.9; // SparseTof
    int lines = 4;             // LidarLines
};

std::string to_string(SparsityPattern::Kind kind);

struct SparseDepth {
    Grid<double> values;
    Grid<uint8_t> mask; // subset of the source validity
    SparsityPattern::Kind origin = SparsityPattern::Kind::Uniform;
    std::vector<int> outlier_indices; // corrupted pixels, ascending linear indices
    int capped = 0;                   // pixels short of the requested count

    int height() const { return values.height; }
    int width() const { return values.width; }
    int sample_count() const;
};

/// Sample a sparse depth map from dense ground truth under the given pattern.
SparseDepth gen_sparsity(const DepthMap &gt, const SparsityPattern &pattern);

/// Corrupt ceil(fraction * |mask|) uniformly chosen points by independent
/// multiplicative factors from U(0.1, 2); corrupted indices are recorded.
SparseDepth inject_outliers(const SparseDepth &sparse, double fraction, Rng &rng);

/// FAST-9 segment-test corners (16-pixel Bresenham circle, radius 3, at least
/// 9 contiguous pixels all above center + threshold or all below center -
/// threshold). Returns ascending linear indices; pixels whose circle leaves
/// the valid region are skipped.
std::vector<int> fast_corners(const Grid<double> &image, double threshold,
                              const Grid<uint8_t> *valid = nullptr);

struct RobustAlignment {
    double s = 1.0;
    double t = 0.0;
    Grid<uint8_t> inliers; // 1 at overlap pixels whose final Huber weight >= 0.5
    int iterations = 0;
    int overlap = 0;
};

struct RobustAlignOptions {
    int max_iterations = 50;
    double rel_change_tol = 1e-8;
    double huber_mad_factor = 1.345; // delta = factor * residual MAD
    double outlier_weight = 0.5;
};

/// Robust affine fit of s * prior + t to the sparse values via iteratively
/// reweighted least squares with a Huber weight. Requires >= 10 overlapping
/// points and a non-constant prior.
RobustAlignment robust_align_sparse(const DepthMap &prior, const SparseDepth &sparse,
                                    const RobustAlignOptions &options = {});

/// Plain (non-robust) least-squares fit of the same model, the side-by-side
/// baseline for the robustness comparison.
std::pair<double, double> plain_align_sparse(const DepthMap &prior, const SparseDepth &sparse);

struct CompletionOptions {
    RobustAlignOptions align;
    double solver_tol = 1e-6;
    int max_sweeps = 50000;
};

/// Metric completion: robust-align the prior, then diffuse the inlier
/// residuals over the image by harmonic (Laplace) interpolation with the
/// inliers as Dirichlet anchors. Output equals the sparse values exactly at
/// inlier sites; outlier sites receive the diffused field.
DepthMap complete_depth(const DepthMap &prior, const SparseDepth &sparse,
                        const CompletionOptions &options = {});

} // namespace depthshape
