#pragma once

#include <set>
#include <span>
#include <utility>
#include <vector>

#include "depthshape/types.hpp"

namespace depthshape {

/// Trimmed image statistics: mean/std of the valid depths after removing the
/// nearest and farthest floor(0.1 * N) pixels per tail (no trimming for N < 10).
/// The standard deviation is the population form (divide by the trimmed count).
struct TrimStats {
    double mu_trim = 0.0;
    double sigma_trim = 0.0;
    int trimmed_size = 0;
};

TrimStats trim_stats(const DepthMap &gt);

/// Scalar loss plus its per-pixel gradient with respect to the prediction.
/// The gradient is zero at invalid pixels; |x| kinks use subgradient 0.
struct LossValue {
    double value = 0.0;
    Grid<double> gradient;
};

/// Least-squares (s, t) minimizing sum (s*pred + t - gt)^2 over jointly-valid
/// pixels. Throws NumericalError for constant predictions.
std::pair<double, double> align_scale_shift(const DepthMap &pred, const DepthMap &gt);

/// Image-level normalized regression loss:
///   mean over jointly-valid pixels of |d - n| + |tanh(d/100) - tanh(n/100)|
/// with n the trimmed-z-score-normalized ground truth. Exactly invariant to
/// positive affine maps of the ground truth.
LossValue ilnr_loss(const DepthMap &pred, const DepthMap &gt);

enum class NormalizeMethod { MinMax, ZScore, Mad, Ilnr };

/// Image-level normalization variants used by the loss ablations. MinMax
/// output is tagged Normalized; the others Affine. Throws NumericalError when
/// the denominator statistic is zero.
DepthMap normalize_variants(const DepthMap &gt, NormalizeMethod method);

struct NormalPair {
    Eigen::Vector3d a = Eigen::Vector3d::Zero();
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
};

/// Pair-wise normal loss: mean |n_A . n_B - n*_A . n*_B| with gradients with
/// respect to the predicted normals (ambient 3-vectors). Empty input gives a
/// zero loss with empty gradients.
struct PwnLossValue {
    double value = 0.0;
    std::vector<Eigen::Vector3d> grad_a;
    std::vector<Eigen::Vector3d> grad_b;
};

PwnLossValue pwn_loss(std::span<const NormalPair> pred, std::span<const NormalPair> gt);

/// Multi-scale gradient loss over `scales` dyadic levels: forward differences
/// on 2x2 average-pooled grids, absolute differences summed over both axes and
/// all levels, divided by the full-resolution valid-pixel count. Levels whose
/// grid would shrink below 2 pixels per side are truncated (scales_used
/// reports the number actually evaluated).
struct MsgLossValue {
    double value = 0.0;
    Grid<double> gradient;
    int scales_used = 0;
};

MsgLossValue msg_loss(const DepthMap &pred, const DepthMap &gt_norm, int scales = 4);

/// Structure-guided ranking loss over sampled depth pairs. Ground-truth labels
/// via the tau-ratio rule: +1 if d*0/d*1 >= 1+tau, -1 if d*1/d*0 >= 1+tau,
/// else 0. Pairs with non-positive ground truth are skipped and counted.
struct DepthPairSample {
    double d0 = 0.0;
    double d1 = 0.0;
};

struct SrLossValue {
    double value = 0.0;
    std::vector<std::array<double, 2>> gradient; // d(loss)/d(d0), d(loss)/d(d1) per pair
    std::vector<int8_t> labels;                  // resolved label per pair (0 for skipped)
    int skipped = 0;
};

SrLossValue sr_loss(std::span<const DepthPairSample> pred, std::span<const DepthPairSample> gt,
                    double tau = 0.02);

/// Mean absolute error over jointly-valid pixels. Throws DataError on empty overlap.
LossValue mae_loss(const DepthMap &pred, const DepthMap &gt);

/// Scale-shift-invariant MAE baseline: align_scale_shift then MAE of the
/// aligned prediction. The gradient treats the fitted (s, t) as constants.
LossValue ssmae_loss(const DepthMap &pred, const DepthMap &gt);

enum class QualityTier { High, Medium, Low };
enum class LossTask { Prediction, Completion };
enum class LossTerm { Sr, Ilnr, PwnEdges, PwnPlanes, Msg, Mae };

QualityTier quality_tier_from_string(const std::string &name);
std::string to_string(LossTerm term);

/// Active loss set per data quality and task. (Low, Completion) has no defined
/// row and throws ConfigError.
std::set<LossTerm> route_losses(QualityTier tier, LossTask task);

} // namespace depthshape
