#include "depthshape/sparse_completion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace depthshape {

namespace {

double percentile_sorted(const std::vector<double> &sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double idx = p * (sorted.size() - 1);
    const size_t lower = static_cast<size_t>(idx);
    const size_t upper = std::min(lower + 1, sorted.size() - 1);
    const double frac = idx - lower;
    return sorted[lower] * (1.0 - frac) + sorted[upper] * frac;
}

double median_inplace(std::vector<double> &v) {
    const size_t n = v.size();
    const size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (n % 2 == 1) return v[mid];
    const double upper = v[mid];
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    return 0.5 * (v[mid - 1] + upper);
}

std::vector<int> valid_indices(const DepthMap &gt) {
    std::vector<int> out;
    out.reserve(gt.mask.size());
    for (int i = 0; i < static_cast<int>(gt.mask.size()); ++i)
        if (gt.mask.data[static_cast<size_t>(i)]) out.push_back(i);
    return out;
}

SparseDepth keep_pixels(const DepthMap &gt, const std::vector<int> &kept,
                        SparsityPattern::Kind kind) {
    SparseDepth out;
    out.values = Grid<double>(gt.height(), gt.width(), 0.0);
    out.mask = Grid<uint8_t>(gt.height(), gt.width(), 0);
    out.origin = kind;
    for (int idx : kept) {
        out.values[idx] = gt.values[idx];
        out.mask[idx] = 1;
    }
    return out;
}

bool point_in_polygon(double r, double c, const std::vector<std::array<double, 2>> &verts) {
    bool inside = false;
    const size_t n = verts.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const double ri = verts[i][0], ci = verts[i][1];
        const double rj = verts[j][0], cj = verts[j][1];
        if ((ri > r) != (rj > r) && c < (cj - ci) * (r - ri) / (rj - ri) + ci) inside = !inside;
    }
    return inside;
}

std::vector<std::array<double, 2>> random_polygon(int height, int width, Rng &rng) {
    const int n_verts = static_cast<int>(rng.uniform_int(3, 8));
    const double area_fraction = rng.uniform(0.05, 0.20);
    const double radius = std::sqrt(area_fraction * height * width / M_PI);
    const double cr = rng.uniform(radius, height - radius);
    const double cc = rng.uniform(radius, width - radius);
    std::vector<double> angles(static_cast<size_t>(n_verts));
    for (double &a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
    std::sort(angles.begin(), angles.end());
    std::vector<std::array<double, 2>> verts;
    verts.reserve(static_cast<size_t>(n_verts));
    for (double a : angles) {
        const double r = rng.uniform(0.6 * radius, 1.2 * radius);
        verts.push_back({cr + r * std::sin(a), cc + r * std::cos(a)});
    }
    return verts;
}

} // namespace

std::string to_string(SparsityPattern::Kind kind) {
    switch (kind) {
    case SparsityPattern::Kind::Uniform: return "uniform";
    case SparsityPattern::Kind::Features: return "features";
    case SparsityPattern::Kind::PolygonHole: return "polygon_hole";
    case SparsityPattern::Kind::DistanceHole: return "distance_hole";
    case SparsityPattern::Kind::UnpairedFov: return "unpaired_fov";
    case SparsityPattern::Kind::SparseTof: return "sparse_tof";
    case SparsityPattern::Kind::ShortRange: return "short_range";
    case SparsityPattern::Kind::LidarLines: return "lidar_lines";
    }
    return "?";
}

int SparseDepth::sample_count() const {
    int n = 0;
    for (uint8_t m : mask.data) n += (m != 0);
    return n;
}

SparseDepth gen_sparsity(const DepthMap &gt, const SparsityPattern &pattern) {
    const std::vector<int> valid = valid_indices(gt);
    if (valid.empty()) throw DataError("gen_sparsity: ground truth has no valid pixels");
    Rng rng(pattern.seed);

    using Kind = SparsityPattern::Kind;
    switch (pattern.kind) {
    case Kind::Uniform: {
        if (pattern.count < 1) throw ConfigError("gen_sparsity: uniform count must be >= 1");
        int n = pattern.count;
        int capped = 0;
        if (n > static_cast<int>(valid.size())) {
            capped = n - static_cast<int>(valid.size());
            n = static_cast<int>(valid.size());
        }
        std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(valid.size()), n);
        std::vector<int> kept;
        kept.reserve(picks.size());
        for (int p : picks) kept.push_back(valid[static_cast<size_t>(p)]);
        std::sort(kept.begin(), kept.end());
        SparseDepth out = keep_pixels(gt, kept, pattern.kind);
        out.capped = capped;
        return out;
    }
    case Kind::Features: {
        const std::vector<int> corners = fast_corners(gt.values, pattern.threshold, &gt.mask);
        return keep_pixels(gt, corners, pattern.kind);
    }
    case Kind::PolygonHole: {
        std::vector<std::array<double, 2>> verts = pattern.vertices;
        if (verts.empty()) verts = random_polygon(gt.height(), gt.width(), rng);
        if (verts.size() < 3) throw ConfigError("gen_sparsity: polygon needs >= 3 vertices");
        std::vector<int> kept;
        for (int idx : valid) {
            const int r = idx / gt.width(), c = idx % gt.width();
            if (!point_in_polygon(r, c, verts)) kept.push_back(idx);
        }
        return keep_pixels(gt, kept, pattern.kind);
    }
    case Kind::DistanceHole: {
        if (pattern.quantile <= 0.0 || pattern.quantile >= 1.0)
            throw ConfigError("gen_sparsity: distance quantile must lie in (0, 1)");
        std::vector<double> depths;
        depths.reserve(valid.size());
        for (int idx : valid) depths.push_back(gt.values[idx]);
        std::sort(depths.begin(), depths.end());
        const double cutoff = percentile_sorted(depths, pattern.quantile);
        std::vector<int> kept;
        for (int idx : valid)
            if (gt.values[idx] <= cutoff) kept.push_back(idx);
        return keep_pixels(gt, kept, pattern.kind);
    }
    case Kind::UnpairedFov: {
        if (pattern.border_fraction < 0.0 || pattern.border_fraction >= 0.5)
            throw ConfigError("gen_sparsity: border fraction must lie in [0, 0.5)");
        const int band_r = static_cast<int>(std::floor(pattern.border_fraction * gt.height()));
        const int band_c = static_cast<int>(std::floor(pattern.border_fraction * gt.width()));
        std::vector<int> kept;
        for (int idx : valid) {
            const int r = idx / gt.width(), c = idx % gt.width();
            if (r >= band_r && r < gt.height() - band_r && c >= band_c && c < gt.width() - band_c)
                kept.push_back(idx);
        }
        return keep_pixels(gt, kept, pattern.kind);
    }
    case Kind::SparseTof: {
        if (pattern.downsample < 1) throw ConfigError("gen_sparsity: downsample must be >= 1");
        std::vector<double> depths;
        depths.reserve(valid.size());
        for (int idx : valid) depths.push_back(gt.values[idx]);
        std::sort(depths.begin(), depths.end());
        const double cutoff = percentile_sorted(depths, pattern.far_quantile);
        std::vector<int> kept;
        for (int idx : valid) {
            const int r = idx / gt.width(), c = idx % gt.width();
            if (r % pattern.downsample == 0 && c % pattern.downsample == 0 &&
                gt.values[idx] <= cutoff)
                kept.push_back(idx);
        }
        return keep_pixels(gt, kept, pattern.kind);
    }
    case Kind::ShortRange: {
        if (pattern.quantile < 0.0 || pattern.quantile > 1.0)
            throw ConfigError("gen_sparsity: short-range quantile must lie in [0, 1]");
        std::vector<std::pair<double, int>> order;
        order.reserve(valid.size());
        for (int idx : valid) order.push_back({gt.values[idx], idx});
        std::sort(order.begin(), order.end()); // by depth, ties by pixel index
        const int n_masked =
            static_cast<int>(std::ceil(pattern.quantile * static_cast<double>(order.size())));
        std::vector<int> kept;
        for (size_t i = 0; i + static_cast<size_t>(n_masked) < order.size(); ++i)
            kept.push_back(order[i].second);
        std::sort(kept.begin(), kept.end());
        return keep_pixels(gt, kept, pattern.kind);
    }
    case Kind::LidarLines: {
        if (pattern.lines < 1) throw ConfigError("gen_sparsity: lines must be >= 1");
        std::vector<uint8_t> keep_row(static_cast<size_t>(gt.height()), 0);
        for (int i = 0; i < pattern.lines; ++i) {
            const int r = std::min(gt.height() - 1,
                                   static_cast<int>((i + 0.5) * gt.height() / pattern.lines));
            keep_row[static_cast<size_t>(r)] = 1;
        }
        std::vector<int> kept;
        for (int idx : valid)
            if (keep_row[static_cast<size_t>(idx / gt.width())]) kept.push_back(idx);
        return keep_pixels(gt, kept, pattern.kind);
    }
    }
    throw ConfigError("gen_sparsity: unknown pattern kind");
}

SparseDepth inject_outliers(const SparseDepth &sparse, double fraction, Rng &rng) {
    if (fraction < 0.0 || fraction > 0.5)
        throw ConfigError("inject_outliers: fraction must lie in [0, 0.5]");
    SparseDepth out = sparse;
    if (fraction == 0.0) return out;
    std::vector<int> present;
    for (int i = 0; i < static_cast<int>(sparse.mask.size()); ++i)
        if (sparse.mask.data[static_cast<size_t>(i)]) present.push_back(i);
    const int n_corrupt = static_cast<int>(std::ceil(fraction * static_cast<double>(present.size())));
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(present.size()), n_corrupt);
    std::vector<int> corrupt;
    corrupt.reserve(picks.size());
    for (int p : picks) corrupt.push_back(present[static_cast<size_t>(p)]);
    std::sort(corrupt.begin(), corrupt.end());
    for (int idx : corrupt) {
        out.values[idx] *= rng.uniform(0.1, 2.0);
        out.outlier_indices.push_back(idx);
    }
    std::sort(out.outlier_indices.begin(), out.outlier_indices.end());
    return out;
}

std::vector<int> fast_corners(const Grid<double> &image, double threshold,
                              const Grid<uint8_t> *valid) {
    // 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
    static constexpr int kCircle[16][2] = {
        {-3, 0}, {-3, 1}, {-2, 2}, {-1, 3}, {0, 3},  {1, 3},   {2, 2},   {3, 1},
        {3, 0},  {3, -1}, {2, -2}, {1, -3}, {0, -3}, {-1, -3}, {-2, -2}, {-3, -1}};
    constexpr int kArc = 9;

    std::vector<int> corners;
    for (int r = 3; r + 3 < image.height; ++r) {
        for (int c = 3; c + 3 < image.width; ++c) {
            if (valid != nullptr && !valid->at(r, c)) continue;
            bool window_ok = true;
            double circle[16];
            for (int k = 0; k < 16 && window_ok; ++k) {
                const int rr = r + kCircle[k][0], cc = c + kCircle[k][1];
                if (valid != nullptr && !valid->at(rr, cc)) window_ok = false;
                else circle[k] = image.at(rr, cc);
            }
            if (!window_ok) continue;
            const double hi = image.at(r, c) + threshold;
            const double lo = image.at(r, c) - threshold;
            int run_hi = 0, run_lo = 0, best_hi = 0, best_lo = 0;
            for (int k = 0; k < 32; ++k) { // doubled walk handles wrap-around arcs
                const double v = circle[k % 16];
                run_hi = v > hi ? run_hi + 1 : 0;
                run_lo = v < lo ? run_lo + 1 : 0;
                best_hi = std::max(best_hi, run_hi);
                best_lo = std::max(best_lo, run_lo);
            }
            if (best_hi >= kArc || best_lo >= kArc) corners.push_back(image.index(r, c));
        }
    }
    return corners;
}

namespace {

struct Overlap {
    std::vector<int> indices;
    std::vector<double> prior_vals;
    std::vector<double> sparse_vals;
};

Overlap collect_overlap(const DepthMap &prior, const SparseDepth &sparse) {
    if (prior.height() != sparse.height() || prior.width() != sparse.width())
        throw DataError("sparse alignment: prior and sparse shapes differ");
    Overlap out;
    for (int i = 0; i < static_cast<int>(prior.mask.size()); ++i) {
        if (!prior.mask.data[static_cast<size_t>(i)] || !sparse.mask.data[static_cast<size_t>(i)])
            continue;
        out.indices.push_back(i);
        out.prior_vals.push_back(prior.values.data[static_cast<size_t>(i)]);
        out.sparse_vals.push_back(sparse.values.data[static_cast<size_t>(i)]);
    }
    return out;
}

std::pair<double, double> weighted_fit(const Overlap &o, const std::vector<double> &w) {
    double sw = 0, swp = 0, swy = 0, swpp = 0, swpy = 0;
    for (size_t i = 0; i < o.indices.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        const double p = o.prior_vals[i], y = o.sparse_vals[i];
        sw += wi;
        swp += wi * p;
        swy += wi * y;
        swpp += wi * p * p;
        swpy += wi * p * y;
    }
    const double det = sw * swpp - swp * swp;
    if (std::abs(det) <= 1e-12 * std::max(1.0, sw * swpp))
        throw NumericalError("sparse alignment: singular system (constant prior)");
    const double s = (sw * swpy - swp * swy) / det;
    const double t = (swy - s * swp) / sw;
    return {s, t};
}

} // namespace

std::pair<double, double> plain_align_sparse(const DepthMap &prior, const SparseDepth &sparse) {
    const Overlap o = collect_overlap(prior, sparse);
    if (static_cast<int>(o.indices.size()) < 10)
        throw DataError("plain_align_sparse: fewer than 10 overlapping points");
    return weighted_fit(o, {});
}

RobustAlignment robust_align_sparse(const DepthMap &prior, const SparseDepth &sparse,
                                    const RobustAlignOptions &options) {
    const Overlap o = collect_overlap(prior, sparse);
    const size_t n = o.indices.size();
    if (static_cast<int>(n) < 10)
        throw DataError("robust_align_sparse: fewer than 10 overlapping points");

    auto [s, t] = weighted_fit(o, {});
    std::vector<double> weights(n, 1.0);
    std::vector<double> residuals(n);
    double delta = 0.0;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        for (size_t i = 0; i < n; ++i) residuals[i] = s * o.prior_vals[i] + t - o.sparse_vals[i];
        std::vector<double> tmp = residuals;
        const double med = median_inplace(tmp);
        for (size_t i = 0; i < n; ++i) tmp[i] = std::abs(residuals[i] - med);
        const double mad = median_inplace(tmp);
        delta = std::max(options.huber_mad_factor * mad, 1e-12);
        for (size_t i = 0; i < n; ++i) {
            const double a = std::abs(residuals[i]);
            weights[i] = a <= delta ? 1.0 : delta / a;
        }
        const auto [s_new, t_new] = weighted_fit(o, weights);
        const double ds = std::abs(s_new - s) / std::max(1.0, std::abs(s_new));
        const double dt = std::abs(t_new - t) / std::max(1.0, std::abs(t_new));
        s = s_new;
        t = t_new;
        if (ds < options.rel_change_tol && dt < options.rel_change_tol) {
            ++iter;
            break;
        }
    }

    RobustAlignment out;
    out.s = s;
    out.t = t;
    out.iterations = iter;
    out.overlap = static_cast<int>(n);
    out.inliers = Grid<uint8_t>(prior.height(), prior.width(), 0);
    for (size_t i = 0; i < n; ++i) {
        const double r = std::abs(s * o.prior_vals[i] + t - o.sparse_vals[i]);
        const double w = r <= delta ? 1.0 : delta / r;
        if (w >= options.outlier_weight) out.inliers[o.indices[i]] = 1;
    }
    return out;
}

DepthMap complete_depth(const DepthMap &prior, const SparseDepth &sparse,
                        const CompletionOptions &options) {
    const RobustAlignment align = robust_align_sparse(prior, sparse, options.align);

    DepthMap out(prior.height(), prior.width(), DepthUnit::Metric);
    out.mask = prior.mask;
    const int h = prior.height(), w = prior.width();

    // Aligned prior plus residual field; anchors hold the exact residual.
    Grid<double> field(h, w, 0.0);
    Grid<uint8_t> anchor(h, w, 0);
    for (int i = 0; i < static_cast<int>(prior.mask.size()); ++i) {
        if (!align.inliers[i]) continue;
        field[i] = sparse.values[i] - (align.s * prior.values[i] + align.t);
        anchor[i] = 1;
    }

    // Red-black Gauss-Seidel for the Laplace equation on the valid region,
    // mirror boundary at image/invalid edges.
    const auto free_pixel = [&](int r, int c) {
        return prior.valid(r, c) && !anchor.at(r, c);
    };
    double residual = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < options.max_sweeps && residual > options.solver_tol; ++sweep) {
        residual = 0.0;
        for (int parity = 0; parity < 2; ++parity) {
            for (int r = 0; r < h; ++r) {
                for (int c = (r + parity) % 2; c < w; c += 2) {
                    if (!free_pixel(r, c)) continue;
                    double sum = 0.0;
                    int count = 0;
                    static constexpr int kOff[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
                    for (const auto &d : kOff) {
                        const int rr = r + d[0], cc = c + d[1];
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w || !prior.valid(rr, cc))
                            continue;
                        sum += field.at(rr, cc);
                        ++count;
                    }
                    if (count == 0) continue;
                    const double next = sum / count;
                    residual = std::max(residual, std::abs(next - field.at(r, c)));
                    field.at(r, c) = next;
                }
            }
        }
    }

    for (int i = 0; i < static_cast<int>(out.mask.size()); ++i) {
        if (!out.mask.data[static_cast<size_t>(i)]) continue;
        if (anchor[i]) out.values.data[static_cast<size_t>(i)] = sparse.values[i];
        else
            out.values.data[static_cast<size_t>(i)] =
                align.s * prior.values.data[static_cast<size_t>(i)] + align.t + field[i];
    }
    return out;
}

} // namespace depthshape
