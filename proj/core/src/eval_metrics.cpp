#include "depthshape/eval_metrics.hpp"

#include "depthshape/depth_losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace depthshape {

namespace {
constexpr double kDepthFloor = 1e-8; // clamp for aligned depths before ratios
} // namespace

std::string to_string(AlignMode mode) {
    switch (mode) {
    case AlignMode::None: return "none";
    case AlignMode::Scale: return "scale";
    case AlignMode::ScaleShift: return "scale_shift";
    }
    return "none";
}

AlignMode align_mode_from_string(const std::string &name) {
    if (name == "none") return AlignMode::None;
    if (name == "scale") return AlignMode::Scale;
    if (name == "scale_shift" || name == "scale+shift") return AlignMode::ScaleShift;
    throw ConfigError("unknown alignment mode: " + name);
}

AbsRelResult absrel_delta(const DepthMap &pred, const DepthMap &gt, AlignMode align) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DataError("absrel_delta: shapes differ");

    double s = 1.0, t = 0.0;
    if (align == AlignMode::Scale) {
        double spg = 0.0, spp = 0.0;
        for (size_t i = 0; i < pred.mask.size(); ++i) {
            if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
            spg += pred.values.data[i] * gt.values.data[i];
            spp += pred.values.data[i] * pred.values.data[i];
        }
        if (spp <= 0.0) throw NumericalError("absrel_delta: zero prediction, scale undefined");
        s = spg / spp;
    } else if (align == AlignMode::ScaleShift) {
        std::tie(s, t) = align_scale_shift(pred, gt);
    }

    AbsRelResult out;
    out.align = align;
    double sum = 0.0;
    int d1 = 0, d2 = 0, d3 = 0, n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        const double g = gt.values.data[i];
        if (!(g > 0.0)) continue;
        const double p = std::max(s * pred.values.data[i] + t, kDepthFloor);
        sum += std::abs(p - g) / g;
        const double ratio = std::max(p / g, g / p);
        d1 += ratio < 1.25;
        d2 += ratio < 1.25 * 1.25;
        d3 += ratio < 1.25 * 1.25 * 1.25;
        ++n;
    }
    if (n == 0) throw DataError("absrel_delta: empty overlap");
    out.absrel = sum / n;
    out.delta1 = 100.0 * d1 / n;
    out.delta2 = 100.0 * d2 / n;
    out.delta3 = 100.0 * d3 / n;
    out.pixels = n;
    return out;
}

double si_rmse(const DepthMap &pred, const DepthMap &gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DataError("si_rmse: shapes differ");
    std::vector<double> diffs;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        const double p = pred.values.data[i], g = gt.values.data[i];
        if (p <= 0.0 || g <= 0.0) continue;
        diffs.push_back(std::log(p) - std::log(g));
    }
    if (diffs.empty()) throw DataError("si_rmse: no positive overlap pixels");
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    double sq = 0.0;
    for (double d : diffs) sq += (d - mean) * (d - mean);
    return std::sqrt(sq / static_cast<double>(diffs.size()));
}

double whdr(const DepthMap &pred, std::span<const OrdinalPair> pairs, double tau) {
    if (pairs.empty()) throw DataError("whdr: no ordinal pairs");
    if (!(tau > 0.0)) throw ConfigError("whdr: tau must be positive");
    int disagreements = 0;
    for (const OrdinalPair &pair : pairs) {
        const double d0 = pred.values[pair.a];
        const double d1 = pred.values[pair.b];
        int8_t predicted = 0;
        if (d1 > 0.0 && d0 / d1 >= 1.0 + tau) predicted = 1;
        else if (d0 > 0.0 && d1 / d0 >= 1.0 + tau) predicted = -1;
        else if (d0 <= 0.0 || d1 <= 0.0) predicted = d0 > d1 ? 1 : (d1 > d0 ? -1 : 0);
        disagreements += predicted != pair.label;
    }
    return 100.0 * disagreements / static_cast<double>(pairs.size());
}

double lsiv(const DepthMap &pred, const DepthMap &gt, std::span<const std::vector<int>> regions,
            int *skipped_regions) {
    if (regions.empty()) throw DataError("lsiv: no regions");
    double sum_sq = 0.0;
    long total = 0;
    int skipped = 0;
    for (const std::vector<int> &region : regions) {
        if (region.size() < 2) {
            ++skipped;
            continue;
        }
        double spg = 0.0, spp = 0.0;
        for (int idx : region) {
            if (!pred.mask[idx] || !gt.mask[idx]) continue;
            spg += pred.values[idx] * gt.values[idx];
            spp += pred.values[idx] * pred.values[idx];
        }
        if (spp <= 0.0) {
            ++skipped;
            continue;
        }
        const double s = spg / spp;
        for (int idx : region) {
            if (!pred.mask[idx] || !gt.mask[idx]) continue;
            const double e = s * pred.values[idx] - gt.values[idx];
            sum_sq += e * e;
            ++total;
        }
    }
    if (skipped_regions != nullptr) *skipped_regions = skipped;
    if (total == 0) throw DataError("lsiv: no usable region pixels");
    return std::sqrt(sum_sq / static_cast<double>(total));
}

Grid<double> distance_transform(const Grid<uint8_t> &binary) {
    // Felzenszwalb-Huttenlocher exact squared EDT, one 1-D pass per axis.
    const double kInf = 1e20;
    const int h = binary.height, w = binary.width;
    Grid<double> dist(h, w, kInf);
    for (size_t i = 0; i < binary.size(); ++i)
        if (binary.data[i]) dist.data[i] = 0.0;

    auto dt_1d = [](const std::vector<double> &f, std::vector<double> &d) {
        const int n = static_cast<int>(f.size());
        std::vector<int> v(static_cast<size_t>(n), 0);
        std::vector<double> z(static_cast<size_t>(n) + 1, 0.0);
        int k = 0;
        v[0] = 0;
        z[0] = -1e30;
        z[1] = 1e30;
        for (int q = 1; q < n; ++q) {
            double s =
                ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            while (s <= z[k]) {
                --k;
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            }
            ++k;
            v[static_cast<size_t>(k)] = q;
            z[static_cast<size_t>(k)] = s;
            z[static_cast<size_t>(k) + 1] = 1e30;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (z[static_cast<size_t>(k) + 1] < q) ++k;
            const int p = v[static_cast<size_t>(k)];
            d[static_cast<size_t>(q)] = (q - p) * (q - p) + f[static_cast<size_t>(p)];
        }
    };

    std::vector<double> f(static_cast<size_t>(std::max(h, w)));
    std::vector<double> d(f.size());
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) f[static_cast<size_t>(r)] = dist.at(r, c);
        f.resize(static_cast<size_t>(h));
        d.resize(static_cast<size_t>(h));
        dt_1d(f, d);
        for (int r = 0; r < h; ++r) dist.at(r, c) = d[static_cast<size_t>(r)];
        f.resize(static_cast<size_t>(std::max(h, w)));
    }
    for (int r = 0; r < h; ++r) {
        f.resize(static_cast<size_t>(w));
        d.resize(static_cast<size_t>(w));
        for (int c = 0; c < w; ++c) f[static_cast<size_t>(c)] = dist.at(r, c);
        dt_1d(f, d);
        for (int c = 0; c < w; ++c) dist.at(r, c) = d[static_cast<size_t>(c)];
    }
    for (double &v : dist.data) v = std::sqrt(v);
    return dist;
}

DbeResult dbe_from_edges(const Grid<uint8_t> &pred_edges, const Grid<uint8_t> &gt_edges,
                         double max_dist) {
    if (pred_edges.height != gt_edges.height || pred_edges.width != gt_edges.width)
        throw DataError("dbe: edge map shapes differ");
    const auto mean_truncated = [max_dist](const Grid<uint8_t> &at, const Grid<double> &dist) {
        double sum = 0.0;
        int n = 0;
        for (size_t i = 0; i < at.size(); ++i) {
            if (!at.data[i]) continue;
            sum += std::min(dist.data[i], max_dist);
            ++n;
        }
        return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
    };
    DbeResult out;
    bool any_gt = false, any_pred = false;
    for (uint8_t v : gt_edges.data) any_gt |= (v != 0);
    for (uint8_t v : pred_edges.data) any_pred |= (v != 0);
    if (any_gt) {
        const Grid<double> dist_gt = distance_transform(gt_edges);
        out.acc = mean_truncated(pred_edges, dist_gt); // absent when no predicted edges
    } else if (any_pred) {
        out.acc = max_dist; // prediction hallucinates edges where gt has none
    }
    if (any_pred) {
        const Grid<double> dist_pred = distance_transform(pred_edges);
        out.comp = mean_truncated(gt_edges, dist_pred);
    } else if (any_gt) {
        out.comp = max_dist; // every gt edge is missed at the truncation value
    }
    return out;
}

DbeResult dbe(const DepthMap &pred, const DepthMap &gt, double max_dist) {
    const EdgeMap pred_edges = detect_edges(pred);
    const EdgeMap gt_edges = detect_edges(gt);
    return dbe_from_edges(pred_edges.binary, gt_edges.binary, max_dist);
}

PeResult pe(const DepthMap &pred, const DepthMap &gt, const CameraIntrinsics &cam,
            std::span<const std::vector<int>> regions) {
    if (regions.empty()) throw DataError("pe: no plane regions");
    const auto [s, t] = align_scale_shift(pred, gt);
    DepthMap aligned = pred;
    for (size_t i = 0; i < aligned.mask.size(); ++i)
        if (aligned.mask.data[i]) aligned.values.data[i] = s * aligned.values.data[i] + t;

    Grid<Eigen::Vector3d> pred_pts, gt_pts;
    Grid<uint8_t> pred_valid, gt_valid;
    unproject_grid(aligned, cam, pred_pts, pred_valid);
    unproject_grid(gt, cam, gt_pts, gt_valid);

    PeResult out;
    double plan_sum = 0.0, orie_sum = 0.0;
    for (const std::vector<int> &region : regions) {
        if (region.size() < 3) {
            ++out.skipped;
            continue;
        }
        try {
            const PlaneFit pf = fit_plane_at_pixels(pred_pts, pred_valid, region);
            const PlaneFit gf = fit_plane_at_pixels(gt_pts, gt_valid, region);
            plan_sum += pf.rms; // std of signed distances: mean distance is 0 at the fit
            const double dot = std::clamp(std::abs(pf.normal.dot(gf.normal)), 0.0, 1.0);
            orie_sum += std::acos(dot) * 180.0 / M_PI;
            ++out.regions_used;
        } catch (const NumericalError &) {
            ++out.skipped;
        }
    }
    if (out.regions_used == 0) throw DataError("pe: no usable plane regions");
    out.plan_cm = 100.0 * plan_sum / out.regions_used;
    out.orie_deg = orie_sum / out.regions_used;
    return out;
}

MetricsReport evaluate_depth(const DepthMap &pred, const DepthMap &gt, AlignMode align,
                             std::span<const OrdinalPair> pairs,
                             std::span<const std::vector<int>> regions,
                             const CameraIntrinsics *cam) {
    MetricsReport report;
    report.align = align;
    const AbsRelResult ar = absrel_delta(pred, gt, align);
    report.absrel = ar.absrel;
    report.delta1 = ar.delta1;
    report.delta2 = ar.delta2;
    report.delta3 = ar.delta3;
    report.pixels = ar.pixels;

    double s = 1.0, t = 0.0;
    if (align == AlignMode::ScaleShift) std::tie(s, t) = align_scale_shift(pred, gt);
    else if (align == AlignMode::Scale) {
        double spg = 0.0, spp = 0.0;
        for (size_t i = 0; i < pred.mask.size(); ++i) {
            if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
            spg += pred.values.data[i] * gt.values.data[i];
            spp += pred.values.data[i] * pred.values.data[i];
        }
        s = spg / spp;
    }
    double sq = 0.0, abs_sum = 0.0;
    int n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        const double e = s * pred.values.data[i] + t - gt.values.data[i];
        sq += e * e;
        abs_sum += std::abs(e);
        ++n;
    }
    if (n > 0) {
        report.rmse = std::sqrt(sq / n);
        report.mae = abs_sum / n;
    }
    report.si_rmse = si_rmse(pred, gt);
    if (!pairs.empty()) report.whdr = whdr(pred, pairs);
    if (!regions.empty()) {
        report.lsiv = lsiv(pred, gt, regions);
        if (cam != nullptr) {
            const PeResult p = pe(pred, gt, *cam, regions);
            report.pe_plan = p.plan_cm;
            report.pe_orie = p.orie_deg;
        }
    }
    const DbeResult d = dbe(pred, gt);
    report.dbe_acc = d.acc;
    report.dbe_comp = d.comp;
    return report;
}

namespace {

std::string fmt(const std::optional<double> &v) {
    if (!v.has_value()) return "";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

constexpr const char *kFields[] = {"absrel",  "delta1", "delta2",  "delta3",   "rmse",
                                   "mae",     "si_rmse", "whdr",   "lsiv",     "dbe_acc",
                                   "dbe_comp", "pe_plan_cm", "pe_orie_deg"};

std::vector<std::optional<double>> field_values(const MetricsReport &r) {
    return {r.absrel, r.delta1, r.delta2,  r.delta3,   r.rmse,    r.mae,    r.si_rmse,
            r.whdr,   r.lsiv,   r.dbe_acc, r.dbe_comp, r.pe_plan, r.pe_orie};
}

} // namespace

std::string metrics_to_csv(const MetricsReport &report) {
    std::ostringstream out;
    out << "metric,value,align,pixels\n";
    const auto values = field_values(report);
    for (size_t i = 0; i < values.size(); ++i) {
        if (!values[i].has_value()) continue;
        out << kFields[i] << ',' << fmt(values[i]) << ',' << to_string(report.align) << ','
            << report.pixels << '\n';
    }
    return out.str();
}

std::string metrics_to_text(const MetricsReport &report) {
    std::ostringstream out;
    out << "alignment: " << to_string(report.align) << "  pixels: " << report.pixels << '\n';
    const auto values = field_values(report);
    for (size_t i = 0; i < values.size(); ++i) {
        if (!values[i].has_value()) continue;
        char buf[64];
        std::snprintf(buf, sizeof buf, "  %-12s %12.6f\n", kFields[i], *values[i]);
        out << buf;
    }
    return out.str();
}

} // namespace depthshape
