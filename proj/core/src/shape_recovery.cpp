#include "depthshape/shape_recovery.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace depthshape {

namespace {

void require_normalized(const DepthMap &depth, const char *op) {
    if (depth.unit != DepthUnit::Normalized)
        throw DataError(std::string(op) + ": input depth must carry the normalized unit tag");
}

std::pair<double, double> valid_min_max(const DepthMap &depth) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (size_t i = 0; i < depth.mask.size(); ++i) {
        if (!depth.mask.data[i]) continue;
        lo = std::min(lo, depth.values.data[i]);
        hi = std::max(hi, depth.values.data[i]);
    }
    if (!(lo < hi))
        throw NumericalError("normalize: degenerate input (constant or empty depth)");
    return {lo, hi};
}

/// Minimize a 1-D objective: coarse grid then golden-section refinement around
/// the best cell. Improving evaluations are appended to the trace.
template <typename F>
double minimize_1d(F &&objective, const SearchRange &search,
                   std::vector<std::pair<double, double>> &trace) {
    double best_x = search.lo;
    double best_f = std::numeric_limits<double>::infinity();
    auto eval = [&](double x) {
        const double f = objective(x);
        if (f < best_f) {
            best_f = f;
            best_x = x;
            trace.emplace_back(x, f);
        }
        return f;
    };

    const int steps = static_cast<int>(std::round((search.hi - search.lo) / search.coarse_step));
    for (int i = 0; i <= steps; ++i) eval(std::min(search.lo + i * search.coarse_step, search.hi));

    double a = std::max(search.lo, best_x - search.coarse_step);
    double b = std::min(search.hi, best_x + search.coarse_step);
    constexpr double phi = 0.6180339887498949;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    double fc = eval(c);
    double fd = eval(d);
    while (b - a > search.tolerance) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d);
        }
    }
    return best_x;
}

/// Per-segment pixel data with the depth factored out: the un-projected point
/// at shift delta is (d + delta) * ray, at focal scale alpha it is
/// (alpha * rx * d, alpha * ry * d, d).
struct SegmentRays {
    std::vector<double> rx, ry, d;
    int size() const { return static_cast<int>(d.size()); }
};

struct FrozenSegments {
    std::vector<SegmentRays> segments;
    std::vector<Eigen::Vector3d> initial_normals;
};

FrozenSegments freeze_segments(const DepthMap &depth, const CameraIntrinsics &cam,
                               const std::vector<PlaneSegment> &segments) {
    FrozenSegments out;
    for (const PlaneSegment &seg : segments) {
        SegmentRays rays;
        rays.rx.reserve(seg.pixels.size());
        rays.ry.reserve(seg.pixels.size());
        rays.d.reserve(seg.pixels.size());
        for (int idx : seg.pixels) {
            const int r = idx / depth.width();
            const int c = idx % depth.width();
            if (!depth.valid(r, c)) continue;
            rays.rx.push_back((c - cam.u0) / cam.f);
            rays.ry.push_back((r - cam.v0) / cam.f);
            rays.d.push_back(depth.values.at(r, c));
        }
        out.segments.push_back(std::move(rays));
        out.initial_normals.push_back(seg.normal);
    }
    return out;
}

/// Plane-fit rms of a point set, or +inf when degenerate. Optionally outputs
/// the unit normal and the in-plane spread (rms extent along the plane).
double plane_rms(const std::vector<Eigen::Vector3d> &pts, Eigen::Vector3d *normal_out = nullptr,
                 double *in_plane_out = nullptr) {
    if (pts.size() < 3) return std::numeric_limits<double>::infinity();
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto &p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto &p : pts) {
        const Eigen::Vector3d q = p - centroid;
        scatter += q * q.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    solver.computeDirect(scatter);
    const Eigen::Vector3d evals = solver.eigenvalues();
    if (evals(1) <= 1e-12 * std::max(evals(2), 1.0))
        return std::numeric_limits<double>::infinity();
    const Eigen::Vector3d normal = solver.eigenvectors().col(0).normalized();
    if (normal_out != nullptr) *normal_out = normal;
    if (in_plane_out != nullptr)
        *in_plane_out = std::sqrt(std::max(0.0, evals(1) + evals(2)) /
                                  static_cast<double>(pts.size()));
    // residual-based rms; the eigenvalue's absolute error is too coarse
    double sq = 0.0;
    for (const auto &p : pts) {
        const double d = normal.dot(p - centroid);
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(pts.size()));
}

double shift_objective(const FrozenSegments &frozen, double delta) {
    // Candidates that push any member pixel to non-positive depth are
    // rejected outright: discarding points shrinks the residual for free and
    // manufactures spurious minima at large negative shifts.
    double total = 0.0;
    std::vector<Eigen::Vector3d> pts;
    for (const SegmentRays &seg : frozen.segments) {
        pts.clear();
        pts.reserve(static_cast<size_t>(seg.size()));
        for (int i = 0; i < seg.size(); ++i) {
            const double z = seg.d[static_cast<size_t>(i)] + delta;
            if (z <= 1e-9) return std::numeric_limits<double>::infinity();
            pts.emplace_back(seg.rx[static_cast<size_t>(i)] * z, seg.ry[static_cast<size_t>(i)] * z, z);
        }
        const double rms = plane_rms(pts);
        if (!std::isfinite(rms)) return std::numeric_limits<double>::infinity();
        total += rms;
    }
    return total;
}

std::vector<PlaneSegment> oblique_segments(const std::vector<PlaneSegment> &segments,
                                           double max_abs_nz) {
    std::vector<PlaneSegment> out;
    for (const PlaneSegment &seg : segments)
        if (std::abs(seg.normal.z()) < max_abs_nz) out.push_back(seg);
    return out;
}

/// Drop window-wide strips along depth discontinuities: real faces are wide
/// in every direction, while discontinuity artifacts are a few pixels across.
/// Thinness is the smaller principal std of the pixel coordinates (rotation
/// invariant, so slanted strips are caught too).
std::vector<PlaneSegment> drop_thin_segments(std::vector<PlaneSegment> segments, int width,
                                             int min_extent_px) {
    std::vector<PlaneSegment> out;
    for (PlaneSegment &seg : segments) {
        double mr = 0.0, mc = 0.0;
        for (int idx : seg.pixels) {
            mr += idx / width;
            mc += idx % width;
        }
        const double n = static_cast<double>(seg.pixels.size());
        mr /= n;
        mc /= n;
        double srr = 0.0, scc = 0.0, src = 0.0;
        for (int idx : seg.pixels) {
            const double dr = idx / width - mr, dc = idx % width - mc;
            srr += dr * dr;
            scc += dc * dc;
            src += dr * dc;
        }
        srr /= n;
        scc /= n;
        src /= n;
        const double tr = srr + scc;
        const double det = srr * scc - src * src;
        const double lambda_min = tr / 2.0 - std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        // a strip of width w has lambda_min ~ (w^2 - 1) / 12
        const double min_var = (min_extent_px * min_extent_px - 1.0) / 12.0;
        if (lambda_min >= min_var) out.push_back(std::move(seg));
    }
    return out;
}

} // namespace

DepthMap normalize_unit(const DepthMap &depth) {
    const auto [lo, hi] = valid_min_max(depth);
    DepthMap out = depth;
    out.unit = DepthUnit::Normalized;
    const double span = hi - lo;
    for (size_t i = 0; i < out.mask.size(); ++i)
        if (out.mask.data[i]) out.values.data[i] = (out.values.data[i] - lo) / span;
    return out;
}

DepthMap normalize_scale(const DepthMap &depth) {
    const auto [lo, hi] = valid_min_max(depth);
    if (hi <= 0.0) throw NumericalError("normalize_scale: maximum depth must be positive");
    DepthMap out = depth;
    out.unit = DepthUnit::Normalized;
    for (size_t i = 0; i < out.mask.size(); ++i)
        if (out.mask.data[i]) out.values.data[i] /= hi;
    return out;
}

namespace {

/// Trim contaminated memberships: points far from their segment's plane at
/// the given shift (beyond 6x the median absolute distance) are dropped.
/// Cross-surface pixels swept into a cluster separate cleanly this way, while
/// pure segments lose nothing thanks to the absolute floor.
FrozenSegments robust_trim_segments(const FrozenSegments &frozen, double delta, int min_pts) {
    FrozenSegments out;
    std::vector<Eigen::Vector3d> pts;
    std::vector<double> dist;
    for (size_t s = 0; s < frozen.segments.size(); ++s) {
        const SegmentRays &seg = frozen.segments[s];
        pts.clear();
        for (int i = 0; i < seg.size(); ++i) {
            const double z = seg.d[static_cast<size_t>(i)] + delta;
            pts.emplace_back(seg.rx[static_cast<size_t>(i)] * z, seg.ry[static_cast<size_t>(i)] * z,
                             z);
        }
        Eigen::Vector3d normal;
        if (!std::isfinite(plane_rms(pts, &normal))) continue;
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (const auto &p : pts) centroid += p;
        centroid /= static_cast<double>(pts.size());
        dist.resize(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) dist[i] = std::abs(normal.dot(pts[i] - centroid));
        std::vector<double> sorted = dist;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double threshold = std::max(6.0 * sorted[sorted.size() / 2], 1e-6);
        SegmentRays trimmed;
        for (int i = 0; i < seg.size(); ++i) {
            if (dist[static_cast<size_t>(i)] > threshold) continue;
            trimmed.rx.push_back(seg.rx[static_cast<size_t>(i)]);
            trimmed.ry.push_back(seg.ry[static_cast<size_t>(i)]);
            trimmed.d.push_back(seg.d[static_cast<size_t>(i)]);
        }
        if (trimmed.size() < min_pts) continue;
        out.segments.push_back(std::move(trimmed));
        out.initial_normals.push_back(frozen.initial_normals[s]);
    }
    return out;
}

/// A segment carries shift signal iff its plane fit degrades under probe
/// shifts: fronto-parallel surfaces (and planes through the camera center)
/// are exactly shift-invariant and contribute nothing.
FrozenSegments usable_segments(const DepthMap &depth, const CameraIntrinsics &cam,
                               const std::vector<PlaneSegment> &segments) {
    const FrozenSegments all = freeze_segments(depth, cam, segments);
    FrozenSegments usable;
    std::vector<Eigen::Vector3d> pts;
    for (size_t s = 0; s < all.segments.size(); ++s) {
        const SegmentRays &seg = all.segments[s];
        double response = 0.0;
        for (double probe : {0.0, 0.3, 0.6}) {
            pts.clear();
            for (int i = 0; i < seg.size(); ++i) {
                const double z = seg.d[static_cast<size_t>(i)] + probe;
                pts.emplace_back(seg.rx[static_cast<size_t>(i)] * z,
                                 seg.ry[static_cast<size_t>(i)] * z, z);
            }
            const double rms = plane_rms(pts);
            if (std::isfinite(rms)) response = std::max(response, rms);
        }
        if (response > 1e-7) {
            usable.segments.push_back(seg);
            usable.initial_normals.push_back(all.initial_normals[s]);
        }
    }
    return usable;
}

} // namespace

RecoveryResult recover_shift(const DepthMap &normalized, const CameraIntrinsics &cam_init,
                             const ShiftRecoveryOptions &options) {
    require_normalized(normalized, "recover_shift");
    cam_init.validate();

    // Strong distortion smears plane normals into filaments that can merge
    // adjacent surfaces into one cluster, and noise spreads them too wide for
    // the default eps; impure or junk memberships show up as a nonzero
    // residual at the optimum (pure ones provably reach ~0). Walk a ladder of
    // eps values and normal windows and keep the solution with the smallest
    // per-segment residual.
    RecoveryResult result;
    bool solved = false;
    double best_residual = std::numeric_limits<double>::infinity();
    int max_segments_seen = 0;
    std::vector<std::pair<int, double>> attempts; // (normal window, eps)
    for (const int window : {options.normal_window, std::max(7, options.normal_window)}) {
        for (const double factor : {1.0, 0.5, 0.25, 2.0, 4.0})
            attempts.emplace_back(window, factor * options.cluster_eps);
        if (options.normal_window >= 7) break;
    }
    int current_window = -1;
    NormalMap normals;
    for (const auto &[window, eps] : attempts) {
        if (window != current_window) {
            normals = compute_normals(normalized, cam_init, window);
            current_window = window;
        }
        const std::vector<PlaneSegment> clusters = drop_thin_segments(
            cluster_planes(normals, normalized, cam_init, eps, options.cluster_min_pts),
            normalized.width(), options.min_extent_px);
        const FrozenSegments frozen = usable_segments(normalized, cam_init, clusters);
        max_segments_seen = std::max(max_segments_seen, static_cast<int>(frozen.segments.size()));
        if (frozen.segments.size() < 2) continue;

        RecoveryResult candidate;
        candidate.segments_used = static_cast<int>(frozen.segments.size());
        candidate.delta_d =
            minimize_1d([&](double delta) { return shift_objective(frozen, delta); },
                        options.search, candidate.objective_trace);
        if (candidate.objective_trace.empty()) continue; // every candidate infeasible
        double residual = candidate.objective_trace.back().second / candidate.segments_used;

        // Contaminated memberships leave a residual at the optimum; trim
        // outlying member pixels at the current estimate and re-solve.
        FrozenSegments active = frozen;
        for (int round = 0; round < 2 && residual > 1e-7; ++round) {
            FrozenSegments trimmed =
                robust_trim_segments(active, candidate.delta_d, options.cluster_min_pts);
            if (trimmed.segments.size() < 2) break;
            RecoveryResult retry;
            retry.segments_used = static_cast<int>(trimmed.segments.size());
            retry.delta_d =
                minimize_1d([&](double delta) { return shift_objective(trimmed, delta); },
                            options.search, retry.objective_trace);
            if (retry.objective_trace.empty()) break;
            const double retry_residual =
                retry.objective_trace.back().second / retry.segments_used;
            if (retry_residual >= residual) break;
            candidate = std::move(retry);
            residual = retry_residual;
            active = std::move(trimmed);
        }

        if (residual < best_residual) {
            best_residual = residual;
            result = std::move(candidate);
            solved = true;
        }
        if (best_residual < 1e-6) break; // pure memberships found
    }
    if (!solved)
        throw NumericalError(
            "recover_shift: insufficient structure, need >= 2 shift-sensitive plane segments, "
            "found " +
            std::to_string(max_segments_seen));
    if (!options.refit_memberships) return result;

    {
        // Recluster at every coarse candidate, then refine on the best
        // candidate's memberships.
        result.objective_trace.clear();
        double best_x = options.search.lo;
        double best_f = std::numeric_limits<double>::infinity();
        FrozenSegments best_frozen;
        const int steps = static_cast<int>(
            std::round((options.search.hi - options.search.lo) / options.search.coarse_step));
        for (int i = 0; i <= steps; ++i) {
            const double delta =
                std::min(options.search.lo + i * options.search.coarse_step, options.search.hi);
            DepthMap shifted = normalized;
            bool usable = true;
            for (size_t px = 0; px < shifted.mask.size(); ++px) {
                if (!shifted.mask.data[px]) continue;
                shifted.values.data[px] += delta;
                if (shifted.values.data[px] <= 1e-9) shifted.mask.data[px] = 0;
            }
            std::vector<PlaneSegment> segs;
            try {
                const NormalMap n = compute_normals(shifted, cam_init, options.normal_window);
                segs = oblique_segments(
                    drop_thin_segments(cluster_planes(n, shifted, cam_init, options.cluster_eps,
                                                      options.cluster_min_pts),
                                       shifted.width(), options.min_extent_px),
                    options.oblique_max_abs_nz);
            } catch (const Error &) {
                usable = false;
            }
            if (!usable || segs.size() < 2) continue;
            FrozenSegments frozen = freeze_segments(shifted, cam_init, segs);
            // Membership pixels carry the shifted depth; evaluate at 0 offset.
            const double f = shift_objective(frozen, 0.0);
            if (f < best_f) {
                best_f = f;
                best_x = delta;
                // Re-freeze against the unshifted map so refinement varies delta.
                best_frozen = freeze_segments(normalized, cam_init, segs);
            }
        }
        if (best_frozen.segments.empty())
            throw NumericalError("recover_shift: no usable candidate under refit memberships");
        SearchRange refine = options.search;
        refine.lo = std::max(options.search.lo, best_x - options.search.coarse_step);
        refine.hi = std::min(options.search.hi, best_x + options.search.coarse_step);
        result.delta_d = minimize_1d(
            [&](double delta) { return shift_objective(best_frozen, delta); }, refine,
            result.objective_trace);
        result.segments_used = static_cast<int>(best_frozen.segments.size());
        return result;
    }
}

namespace {

double focal_objective(const FrozenSegments &frozen, double alpha) {
    std::vector<Eigen::Vector3d> normals;
    std::vector<double> sizes;
    std::vector<Eigen::Vector3d> pts;
    for (const SegmentRays &seg : frozen.segments) {
        pts.clear();
        pts.reserve(static_cast<size_t>(seg.size()));
        for (int i = 0; i < seg.size(); ++i) {
            const double z = seg.d[static_cast<size_t>(i)];
            pts.emplace_back(alpha * seg.rx[static_cast<size_t>(i)] * z,
                             alpha * seg.ry[static_cast<size_t>(i)] * z, z);
        }
        Eigen::Vector3d n;
        if (!std::isfinite(plane_rms(pts, &n))) return std::numeric_limits<double>::infinity();
        normals.push_back(n);
        sizes.push_back(static_cast<double>(seg.size()));
    }
    double total = 0.0;
    for (size_t i = 0; i < normals.size(); ++i) {
        for (size_t j = i + 1; j < normals.size(); ++j) {
            const double dot = std::clamp(std::abs(normals[i].dot(normals[j])), 0.0, 1.0);
            const double angle = std::acos(dot);                 // [0, pi/2]
            const double dist = std::min(angle, M_PI_2 - angle); // to {0, 90} degrees
            total += std::min(sizes[i], sizes[j]) * dist * dist;
        }
    }
    return total;
}

} // namespace

RecoveryResult recover_focal(const DepthMap &normalized, const CameraIntrinsics &cam_init,
                             const FocalRecoveryOptions &options) {
    require_normalized(normalized, "recover_focal");
    cam_init.validate();

    const NormalMap normals = compute_normals(normalized, cam_init, options.normal_window);
    const std::vector<PlaneSegment> segments = drop_thin_segments(
        cluster_planes(normals, normalized, cam_init, options.cluster_eps, options.cluster_min_pts),
        normalized.width(), options.min_extent_px);
    if (segments.size() < 2)
        throw NumericalError("recover_focal: insufficient structure, need >= 2 plane segments");

    const double min_angle = options.distinct_angle_deg * M_PI / 180.0;
    bool distinct = false;
    for (size_t i = 0; i < segments.size() && !distinct; ++i)
        for (size_t j = i + 1; j < segments.size(); ++j) {
            const double dot = std::clamp(std::abs(segments[i].normal.dot(segments[j].normal)), 0.0, 1.0);
            if (std::acos(dot) >= min_angle) {
                distinct = true;
                break;
            }
        }
    if (!distinct)
        throw NumericalError("recover_focal: insufficient structure, all segments parallel");

    const FrozenSegments frozen = freeze_segments(normalized, cam_init, segments);
    RecoveryResult result;
    result.segments_used = static_cast<int>(segments.size());
    result.alpha_f = minimize_1d([&](double alpha) { return focal_objective(frozen, alpha); },
                                 options.search, result.objective_trace);
    return result;
}

SceneReconstruction reconstruct_scene(const DepthMap &depth, const CameraIntrinsics &cam_guess,
                                      const ReconstructOptions &options) {
    cam_guess.validate();
    SceneReconstruction out;
    DepthMap normalized = normalize_unit(depth);

    ShiftRecoveryOptions shift_options = options.shift;
    for (;;) {
        out.shift = recover_shift(normalized, cam_guess, shift_options);
        const SearchRange &range = shift_options.search;
        const bool at_hi = out.shift.delta_d >= range.hi - range.coarse_step &&
                           range.hi < options.max_shift_bound;
        const bool at_lo = out.shift.delta_d <= range.lo + range.coarse_step &&
                           range.lo > -options.max_shift_bound;
        if (!at_hi && !at_lo) break;
        if (at_hi) shift_options.search.hi = std::min(2.0 * range.hi, options.max_shift_bound);
        if (at_lo) shift_options.search.lo = std::max(2.0 * range.lo, -options.max_shift_bound);
    }

    out.corrected_depth = std::move(normalized);
    for (size_t i = 0; i < out.corrected_depth.mask.size(); ++i) {
        if (!out.corrected_depth.mask.data[i]) continue;
        out.corrected_depth.values.data[i] += out.shift.delta_d;
        if (out.corrected_depth.values.data[i] <= 0.0) out.corrected_depth.mask.data[i] = 0;
    }

    out.focal = recover_focal(out.corrected_depth, cam_guess, options.focal);
    out.corrected_cam = cam_guess;
    out.corrected_cam.f = cam_guess.f / out.focal.alpha_f;
    out.cloud = unproject(out.corrected_depth, out.corrected_cam);
    return out;
}

} // namespace depthshape
