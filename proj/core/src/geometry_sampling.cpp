#include "depthshape/geometry_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

namespace depthshape {

namespace {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double idx = p * (values.size() - 1);
    const size_t lower = static_cast<size_t>(idx);
    const size_t upper = std::min(lower + 1, values.size() - 1);
    const double frac = idx - lower;
    return values[lower] * (1.0 - frac) + values[upper] * frac;
}

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

/// Sobel over one or more channels. `fetch(ch, r, c)` returns the channel
/// value; `valid(r, c)` gates the 3x3 window. Direction comes from the channel
/// with the strongest local response.
template <typename Fetch, typename Valid>
EdgeMap sobel_edges(int height, int width, int channels, Fetch fetch, Valid valid,
                    double threshold_factor, EdgeSource source) {
    EdgeMap out;
    out.strength = Grid<double>(height, width, 0.0);
    out.gx = Grid<double>(height, width, 0.0);
    out.gy = Grid<double>(height, width, 0.0);
    out.binary = Grid<uint8_t>(height, width, 0);
    out.source = source;

    for (int r = 1; r + 1 < height; ++r) {
        for (int c = 1; c + 1 < width; ++c) {
            bool window_ok = true;
            for (int dr = -1; dr <= 1 && window_ok; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    if (!valid(r + dr, c + dc)) {
                        window_ok = false;
                        break;
                    }
            if (!window_ok) continue;
            double mag_sq = 0.0;
            double best_mag = -1.0, best_gx = 0.0, best_gy = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
                double gx = 0.0, gy = 0.0;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const double v = fetch(ch, r + dr, c + dc);
                        gx += kSobelX[dr + 1][dc + 1] * v;
                        gy += kSobelY[dr + 1][dc + 1] * v;
                    }
                }
                const double m = gx * gx + gy * gy;
                mag_sq += m;
                if (m > best_mag) {
                    best_mag = m;
                    best_gx = gx;
                    best_gy = gy;
                }
            }
            out.strength.at(r, c) = std::sqrt(mag_sq);
            out.gx.at(r, c) = best_gx;
            out.gy.at(r, c) = best_gy;
        }
    }

    std::vector<double> strengths;
    strengths.reserve(out.strength.size());
    for (double s : out.strength.data) strengths.push_back(s);
    const double threshold = threshold_factor * percentile(std::move(strengths), 0.99);
    for (size_t i = 0; i < out.strength.size(); ++i)
        out.binary.data[i] = out.strength.data[i] > threshold ? 1 : 0;
    return out;
}

} // namespace

EdgeMap detect_edges(const DepthMap &depth, double threshold_factor) {
    return sobel_edges(
        depth.height(), depth.width(), 1,
        [&](int, int r, int c) { return depth.values.at(r, c); },
        [&](int r, int c) { return depth.valid(r, c); }, threshold_factor, EdgeSource::Depth);
}

EdgeMap detect_edges(const NormalMap &normals, double threshold_factor) {
    return sobel_edges(
        normals.height(), normals.width(), 3,
        [&](int ch, int r, int c) { return normals.normals.at(r, c)(ch); },
        [&](int r, int c) { return normals.valid(r, c); }, threshold_factor, EdgeSource::Normal);
}

EdgeMap detect_edges_image(const Grid<double> &image, double threshold_factor) {
    return sobel_edges(
        image.height, image.width, 1, [&](int, int r, int c) { return image.at(r, c); },
        [&](int, int) { return true; }, threshold_factor, EdgeSource::Image);
}

PointPairSet sample_edge_pairs(const EdgeMap &edges, const NormalMap &gt_normals, int budget,
                               Rng &rng, const EdgeMap *image_edges,
                               const EdgePairOptions &options) {
    if (budget < 1) throw ConfigError("sample_edge_pairs: budget must be >= 1");
    if (edges.strength.height != gt_normals.height() || edges.strength.width != gt_normals.width())
        throw DataError("sample_edge_pairs: edge map and normal map shapes differ");
    const EdgeMap *img = image_edges;
    if (img == nullptr && edges.source == EdgeSource::Image) img = &edges;

    std::vector<int> edge_pixels;
    for (int i = 0; i < static_cast<int>(edges.binary.size()); ++i)
        if (edges.binary[i]) edge_pixels.push_back(i);

    PointPairSet out;
    if (edge_pixels.empty()) return out; // no qualifying pairs: empty set

    rng.shuffle(edge_pixels);
    const int width = edges.strength.width;

    struct Candidate {
        PixelPair pair;
        NormalPairRef normals;
        bool positive;
    };
    std::vector<Candidate> positives, negatives;

    const long max_draws = static_cast<long>(budget) * 8;
    long draws = 0;
    size_t cursor = 0;
    while (static_cast<int>(positives.size() + negatives.size()) < budget && draws < max_draws) {
        ++draws;
        const int idx = edge_pixels[cursor];
        cursor = (cursor + 1) % edge_pixels.size();
        const int r = idx / width, c = idx % width;
        const double gx = edges.gx[idx], gy = edges.gy[idx];
        const double norm = std::hypot(gx, gy);
        if (norm <= 0.0) continue;
        const double dx = gx / norm, dy = gy / norm;
        const int ra = static_cast<int>(rng.uniform_int(options.min_offset, options.max_offset));
        const int rb = static_cast<int>(rng.uniform_int(options.min_offset, options.max_offset));
        const int ar = r + static_cast<int>(std::lround(dy * ra));
        const int ac = c + static_cast<int>(std::lround(dx * ra));
        const int br = r - static_cast<int>(std::lround(dy * rb));
        const int bc = c - static_cast<int>(std::lround(dx * rb));
        if (!gt_normals.normals.in_bounds(ar, ac) || !gt_normals.normals.in_bounds(br, bc))
            continue;
        if (!gt_normals.valid(ar, ac) || !gt_normals.valid(br, bc)) continue;
        if (ar == br && ac == bc) continue;
        const Eigen::Vector3d na = gt_normals.normals.at(ar, ac);
        const Eigen::Vector3d nb = gt_normals.normals.at(br, bc);
        const double dot = na.dot(nb);
        Candidate cand{{gt_normals.normals.index(ar, ac), gt_normals.normals.index(br, bc)},
                       {na, nb},
                       false};
        if (dot < options.positive_dot) {
            cand.positive = true;
            positives.push_back(cand);
        } else if (dot > options.negative_dot && img != nullptr && img->binary[idx]) {
            negatives.push_back(cand);
        }
    }

    // Balance by downsampling the majority class; a missing class keeps the other.
    size_t n_pos = positives.size(), n_neg = negatives.size();
    if (n_pos > 0 && n_neg > 0) {
        const size_t minority = std::min(n_pos, n_neg);
        const size_t cap = static_cast<size_t>(
            std::ceil((1.0 + options.balance_slack) * static_cast<double>(minority)));
        n_pos = std::min(n_pos, cap);
        n_neg = std::min(n_neg, cap);
    }
    positives.resize(n_pos);
    negatives.resize(n_neg);

    for (const auto &group : {positives, negatives}) {
        for (const Candidate &cand : group) {
            out.pairs.push_back(cand.pair);
            out.labels.push_back(cand.positive ? PairLabel::EdgePositive : PairLabel::EdgeNegative);
            out.gt_normals.push_back(cand.normals);
        }
    }
    return out;
}

namespace {

struct FeatureIndex {
    std::vector<std::array<double, 4>> features;
    std::vector<int> pixel_of_point; // feature row -> pixel linear index
    double eps = 0.05;
    std::unordered_map<uint64_t, std::vector<int>> cells;

    static uint64_t mix(uint64_t h, int64_t v) {
        h ^= static_cast<uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }

    uint64_t key_of(const std::array<double, 4> &f) const {
        uint64_t h = 0;
        for (double x : f) h = mix(h, static_cast<int64_t>(std::floor(x / eps)));
        return h;
    }

    void build() {
        for (int i = 0; i < static_cast<int>(features.size()); ++i)
            cells[key_of(features[static_cast<size_t>(i)])].push_back(i);
    }

    void neighbors(int i, std::vector<int> &out) const {
        out.clear();
        const auto &f = features[static_cast<size_t>(i)];
        std::array<int64_t, 4> base;
        for (int k = 0; k < 4; ++k) base[static_cast<size_t>(k)] = static_cast<int64_t>(std::floor(f[static_cast<size_t>(k)] / eps));
        const double eps_sq = eps * eps;
        std::array<int64_t, 4> cell;
        for (int d0 = -1; d0 <= 1; ++d0)
            for (int d1 = -1; d1 <= 1; ++d1)
                for (int d2 = -1; d2 <= 1; ++d2)
                    for (int d3 = -1; d3 <= 1; ++d3) {
                        cell = {base[0] + d0, base[1] + d1, base[2] + d2, base[3] + d3};
                        uint64_t h = 0;
                        for (int64_t v : cell) h = mix(h, v);
                        const auto it = cells.find(h);
                        if (it == cells.end()) continue;
                        for (int j : it->second) {
                            const auto &g = features[static_cast<size_t>(j)];
                            double dist = 0.0;
                            for (int k = 0; k < 4; ++k) {
                                const double d = f[static_cast<size_t>(k)] - g[static_cast<size_t>(k)];
                                dist += d * d;
                            }
                            if (dist <= eps_sq) out.push_back(j);
                        }
                    }
    }
};

} // namespace

std::vector<PlaneSegment> cluster_planes(const NormalMap &normals, const DepthMap &depth,
                                         const CameraIntrinsics &cam, double eps, int min_pts) {
    if (!(eps > 0.0)) throw ConfigError("cluster_planes: eps must be positive");
    if (normals.height() != depth.height() || normals.width() != depth.width())
        throw DataError("cluster_planes: normal map and depth map shapes differ");

    Grid<Eigen::Vector3d> points;
    Grid<uint8_t> depth_valid;
    unproject_grid(depth, cam, points, depth_valid);

    FeatureIndex index;
    index.eps = eps;
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (int i = 0; i < static_cast<int>(depth_valid.size()); ++i) {
        if (!depth_valid[i] || !normals.mask[i]) continue;
        lo = lo.cwiseMin(points[i]);
        hi = hi.cwiseMax(points[i]);
    }
    const double diag = (hi - lo).norm();
    if (!(diag > 0.0)) return {};

    for (int i = 0; i < static_cast<int>(depth_valid.size()); ++i) {
        if (!depth_valid[i] || !normals.mask[i]) continue;
        const Eigen::Vector3d &n = normals.normals[i];
        index.features.push_back({n.x(), n.y(), n.z(), n.dot(points[i]) / diag});
        index.pixel_of_point.push_back(i);
    }
    index.build();

    const int n_points = static_cast<int>(index.features.size());
    std::vector<int> cluster(static_cast<size_t>(n_points), -2); // -2 unvisited, -1 noise
    std::vector<int> neighborhood, expansion;
    int n_clusters = 0;
    for (int i = 0; i < n_points; ++i) {
        if (cluster[static_cast<size_t>(i)] != -2) continue;
        index.neighbors(i, neighborhood);
        if (static_cast<int>(neighborhood.size()) < min_pts) {
            cluster[static_cast<size_t>(i)] = -1;
            continue;
        }
        const int id = n_clusters++;
        cluster[static_cast<size_t>(i)] = id;
        std::deque<int> queue(neighborhood.begin(), neighborhood.end());
        while (!queue.empty()) {
            const int j = queue.front();
            queue.pop_front();
            if (cluster[static_cast<size_t>(j)] == -1) cluster[static_cast<size_t>(j)] = id;
            if (cluster[static_cast<size_t>(j)] != -2) continue;
            cluster[static_cast<size_t>(j)] = id;
            index.neighbors(j, expansion);
            if (static_cast<int>(expansion.size()) >= min_pts)
                queue.insert(queue.end(), expansion.begin(), expansion.end());
        }
    }

    std::vector<std::vector<int>> members(static_cast<size_t>(n_clusters));
    for (int i = 0; i < n_points; ++i)
        if (cluster[static_cast<size_t>(i)] >= 0)
            members[static_cast<size_t>(cluster[static_cast<size_t>(i)])].push_back(
                index.pixel_of_point[static_cast<size_t>(i)]);

    std::vector<PlaneSegment> segments;
    for (auto &pixels : members) {
        if (static_cast<int>(pixels.size()) < min_pts) continue;
        std::sort(pixels.begin(), pixels.end());
        PlaneSegment seg;
        seg.pixels = std::move(pixels);
        try {
            const PlaneFit fit = fit_plane_at_pixels(points, depth_valid, seg.pixels);
            seg.normal = fit.normal;
            seg.offset = fit.offset;
            seg.rms = fit.rms;
        } catch (const NumericalError &) {
            continue; // rank-deficient cluster, drop it
        }
        segments.push_back(std::move(seg));
    }
    return segments;
}

PointPairSet sample_coplanar_pairs(std::span<const PlaneSegment> segments, int budget, Rng &rng) {
    if (segments.empty()) throw DataError("sample_coplanar_pairs: no segments");
    std::vector<const PlaneSegment *> usable;
    long total_area = 0;
    for (const PlaneSegment &seg : segments) {
        if (seg.size() >= 2) {
            usable.push_back(&seg);
            total_area += seg.size();
        }
    }
    PointPairSet out;
    if (usable.empty() || budget < 1) return out;

    // Largest-remainder proportional allocation.
    std::vector<int> quota(usable.size(), 0);
    std::vector<std::pair<double, size_t>> remainders;
    int assigned = 0;
    for (size_t i = 0; i < usable.size(); ++i) {
        const double exact = static_cast<double>(budget) * usable[i]->size() / total_area;
        quota[i] = static_cast<int>(std::floor(exact));
        assigned += quota[i];
        remainders.push_back({exact - quota[i], i});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto &a, const auto &b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int k = 0; k < budget - assigned; ++k) ++quota[remainders[static_cast<size_t>(k)].second];

    for (size_t i = 0; i < usable.size(); ++i) {
        const PlaneSegment &seg = *usable[i];
        for (int k = 0; k < quota[i]; ++k) {
            const int n = seg.size();
            const int a = static_cast<int>(rng.uniform_int(0, n - 1));
            int b = static_cast<int>(rng.uniform_int(0, n - 2));
            if (b >= a) ++b;
            out.pairs.push_back(
                {seg.pixels[static_cast<size_t>(a)], seg.pixels[static_cast<size_t>(b)]});
            out.labels.push_back(PairLabel::Coplanar);
            out.gt_normals.push_back({seg.normal, seg.normal});
        }
    }
    return out;
}

std::vector<PlaneSegment> segments_from_mask(const Grid<uint8_t> &mask, const DepthMap *depth,
                                             const CameraIntrinsics *cam) {
    std::array<std::vector<int>, 256> by_value;
    for (int i = 0; i < static_cast<int>(mask.size()); ++i)
        if (mask[i] != 0) by_value[mask[i]].push_back(i);

    Grid<Eigen::Vector3d> points;
    Grid<uint8_t> valid;
    const bool fit = depth != nullptr && cam != nullptr;
    if (fit) unproject_grid(*depth, *cam, points, valid);

    std::vector<PlaneSegment> segments;
    for (int value = 1; value < 256; ++value) {
        auto &pixels = by_value[static_cast<size_t>(value)];
        if (pixels.empty()) continue;
        PlaneSegment seg;
        seg.pixels = std::move(pixels);
        if (fit) {
            try {
                const PlaneFit plane = fit_plane_at_pixels(points, valid, seg.pixels);
                seg.normal = plane.normal;
                seg.offset = plane.offset;
                seg.rms = plane.rms;
            } catch (const NumericalError &) {
                // membership-only segment; the default normal stands in
            }
        }
        segments.push_back(std::move(seg));
    }
    return segments;
}

} // namespace depthshape
