#include "depthshape/depth_losses.hpp"

#include <algorithm>
#include <cmath>

namespace depthshape {

namespace {

double sign_sub(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_same_shape(const DepthMap &pred, const DepthMap &gt, const char *op) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DataError(std::string(op) + ": prediction and ground truth shapes differ");
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

} // namespace

TrimStats trim_stats(const DepthMap &gt) {
    std::vector<double> vals = gt.valid_values();
    if (vals.empty()) throw DataError("trim_stats: no valid pixels");
    std::sort(vals.begin(), vals.end());
    const int n = static_cast<int>(vals.size());
    const int per_tail = static_cast<int>(std::floor(0.1 * n));
    TrimStats stats;
    stats.trimmed_size = n - 2 * per_tail;
    double sum = 0.0;
    for (int i = per_tail; i < n - per_tail; ++i) sum += vals[i];
    stats.mu_trim = sum / stats.trimmed_size;
    double sq = 0.0;
    for (int i = per_tail; i < n - per_tail; ++i) {
        const double d = vals[i] - stats.mu_trim;
        sq += d * d;
    }
    stats.sigma_trim = std::sqrt(sq / stats.trimmed_size);
    return stats;
}

std::pair<double, double> align_scale_shift(const DepthMap &pred, const DepthMap &gt) {
    check_same_shape(pred, gt, "align_scale_shift");
    double sp = 0, sg = 0, spp = 0, spg = 0;
    int n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        const double p = pred.values.data[i];
        const double g = gt.values.data[i];
        sp += p;
        sg += g;
        spp += p * p;
        spg += p * g;
        ++n;
    }
    if (n < 2) throw DataError("align_scale_shift: fewer than 2 jointly-valid pixels");
    const double det = n * spp - sp * sp;
    if (std::abs(det) <= 1e-12 * std::max(1.0, n * spp))
        throw NumericalError("align_scale_shift: singular system (constant prediction)");
    const double s = (n * spg - sp * sg) / det;
    const double t = (sg - s * sp) / n;
    return {s, t};
}

LossValue ilnr_loss(const DepthMap &pred, const DepthMap &gt) {
    check_same_shape(pred, gt, "ilnr_loss");
    const TrimStats stats = trim_stats(gt);
    if (stats.sigma_trim <= 0.0)
        throw NumericalError("ilnr_loss: degenerate normalization (constant ground truth)");

    LossValue out;
    out.gradient = Grid<double>(pred.height(), pred.width(), 0.0);
    double sum = 0.0;
    int n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        ++n;
    }
    if (n == 0) throw DataError("ilnr_loss: empty overlap");
    const double inv_n = 1.0 / n;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        const double d = pred.values.data[i];
        const double norm = (gt.values.data[i] - stats.mu_trim) / stats.sigma_trim;
        const double tanh_d = std::tanh(d / 100.0);
        const double tanh_n = std::tanh(norm / 100.0);
        sum += std::abs(d - norm) + std::abs(tanh_d - tanh_n);
        const double grad = sign_sub(d - norm) +
                            sign_sub(tanh_d - tanh_n) * (1.0 - tanh_d * tanh_d) / 100.0;
        out.gradient.data[i] = grad * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

DepthMap normalize_variants(const DepthMap &gt, NormalizeMethod method) {
    std::vector<double> vals = gt.valid_values();
    if (vals.empty()) throw DataError("normalize_variants: no valid pixels");

    double shift = 0.0, scale = 0.0;
    switch (method) {
    case NormalizeMethod::MinMax: {
        const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        shift = *lo;
        scale = *hi - *lo;
        break;
    }
    case NormalizeMethod::ZScore: {
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= vals.size();
        double sq = 0.0;
        for (double v : vals) sq += (v - mean) * (v - mean);
        shift = mean;
        scale = std::sqrt(sq / vals.size());
        break;
    }
    case NormalizeMethod::Mad: {
        std::vector<double> tmp = vals;
        const double med = median_inplace(tmp);
        for (double &v : tmp) v = std::abs(v - med);
        shift = med;
        scale = median_inplace(tmp);
        break;
    }
    case NormalizeMethod::Ilnr: {
        const TrimStats stats = trim_stats(gt);
        shift = stats.mu_trim;
        scale = stats.sigma_trim;
        break;
    }
    }
    if (scale <= 0.0)
        throw NumericalError("normalize_variants: degenerate normalization (zero denominator)");

    DepthMap out = gt;
    out.unit = method == NormalizeMethod::MinMax ? DepthUnit::Normalized : DepthUnit::Affine;
    for (size_t i = 0; i < out.mask.size(); ++i)
        if (out.mask.data[i]) out.values.data[i] = (out.values.data[i] - shift) / scale;
    return out;
}

PwnLossValue pwn_loss(std::span<const NormalPair> pred, std::span<const NormalPair> gt) {
    if (pred.size() != gt.size()) throw DataError("pwn_loss: pair list lengths differ");
    PwnLossValue out;
    if (pred.empty()) return out;
    out.grad_a.resize(pred.size());
    out.grad_b.resize(pred.size());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    double sum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double dot = pred[i].a.dot(pred[i].b);
        const double gt_dot = gt[i].a.dot(gt[i].b);
        const double diff = dot - gt_dot;
        sum += std::abs(diff);
        const double s = sign_sub(diff) * inv_n;
        out.grad_a[i] = s * pred[i].b;
        out.grad_b[i] = s * pred[i].a;
    }
    out.value = sum * inv_n;
    return out;
}

namespace {

struct PooledLevel {
    Grid<double> values;
    Grid<uint8_t> mask;
    Grid<int> contributors; // number of valid fine pixels pooled into each cell
};

PooledLevel pool_half(const Grid<double> &values, const Grid<uint8_t> &mask) {
    PooledLevel out;
    const int h = values.height / 2;
    const int w = values.width / 2;
    out.values = Grid<double>(h, w, 0.0);
    out.mask = Grid<uint8_t>(h, w, 0);
    out.contributors = Grid<int>(h, w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double sum = 0.0;
            int count = 0;
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc)
                    if (mask.at(2 * r + dr, 2 * c + dc)) {
                        sum += values.at(2 * r + dr, 2 * c + dc);
                        ++count;
                    }
            if (count > 0) {
                out.values.at(r, c) = sum / count;
                out.mask.at(r, c) = 1;
                out.contributors.at(r, c) = count;
            }
        }
    }
    return out;
}

} // namespace

MsgLossValue msg_loss(const DepthMap &pred, const DepthMap &gt_norm, int scales) {
    check_same_shape(pred, gt_norm, "msg_loss");
    if (scales < 1) throw ConfigError("msg_loss: scales must be >= 1");
    const int n_valid = [&] {
        int n = 0;
        for (size_t i = 0; i < pred.mask.size(); ++i)
            n += (pred.mask.data[i] && gt_norm.mask.data[i]);
        return n;
    }();
    if (n_valid == 0) throw DataError("msg_loss: empty overlap");
    const double inv_n = 1.0 / n_valid;

    MsgLossValue out;
    out.gradient = Grid<double>(pred.height(), pred.width(), 0.0);

    // Level 0 state: jointly-valid full-resolution grids.
    Grid<double> p_vals = pred.values;
    Grid<double> g_vals = gt_norm.values;
    Grid<uint8_t> valid(pred.height(), pred.width(), 0);
    for (size_t i = 0; i < valid.size(); ++i)
        valid.data[i] = (pred.mask.data[i] && gt_norm.mask.data[i]) ? 1 : 0;

    // Pooling chain recorded for the backward pass.
    std::vector<Grid<double>> level_pred{p_vals};
    std::vector<Grid<uint8_t>> level_mask{valid};
    std::vector<Grid<int>> level_contrib; // contributors for level k -> k+1
    std::vector<Grid<double>> level_gt{g_vals};

    double sum = 0.0;
    std::vector<Grid<double>> level_grad; // d(loss)/d(level values), filled forward
    for (int k = 0; k < scales; ++k) {
        const Grid<double> &pv = level_pred.back();
        const Grid<double> &gv = level_gt.back();
        const Grid<uint8_t> &mv = level_mask.back();
        if (pv.height < 2 || pv.width < 2) break; // truncated: grid too small for differences
        Grid<double> grad(pv.height, pv.width, 0.0);
        for (int r = 0; r < pv.height; ++r) {
            for (int c = 0; c < pv.width; ++c) {
                if (!mv.at(r, c)) continue;
                if (c + 1 < pv.width && mv.at(r, c + 1)) {
                    const double dp = pv.at(r, c + 1) - pv.at(r, c);
                    const double dg = gv.at(r, c + 1) - gv.at(r, c);
                    sum += std::abs(dp - dg);
                    const double s = sign_sub(dp - dg);
                    grad.at(r, c + 1) += s;
                    grad.at(r, c) -= s;
                }
                if (r + 1 < pv.height && mv.at(r + 1, c)) {
                    const double dp = pv.at(r + 1, c) - pv.at(r, c);
                    const double dg = gv.at(r + 1, c) - gv.at(r, c);
                    sum += std::abs(dp - dg);
                    const double s = sign_sub(dp - dg);
                    grad.at(r + 1, c) += s;
                    grad.at(r, c) -= s;
                }
            }
        }
        level_grad.push_back(std::move(grad));
        ++out.scales_used;
        if (k + 1 < scales) {
            PooledLevel pp = pool_half(pv, mv);
            PooledLevel pg = pool_half(gv, mv);
            level_contrib.push_back(pp.contributors);
            level_pred.push_back(std::move(pp.values));
            level_mask.push_back(std::move(pp.mask));
            level_gt.push_back(std::move(pg.values));
        }
    }
    out.value = sum * inv_n;

    // Backward: push each level's gradient down through the pooling chain.
    for (int k = out.scales_used - 1; k >= 0; --k) {
        Grid<double> g = level_grad[static_cast<size_t>(k)];
        for (int level = k - 1; level >= 0; --level) {
            const Grid<int> &contrib = level_contrib[static_cast<size_t>(level)];
            const Grid<uint8_t> &fine_mask = level_mask[static_cast<size_t>(level)];
            Grid<double> fine(fine_mask.height, fine_mask.width, 0.0);
            for (int r = 0; r < g.height; ++r) {
                for (int c = 0; c < g.width; ++c) {
                    if (g.at(r, c) == 0.0 || contrib.at(r, c) == 0) continue;
                    const double share = g.at(r, c) / contrib.at(r, c);
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc)
                            if (fine_mask.at(2 * r + dr, 2 * c + dc))
                                fine.at(2 * r + dr, 2 * c + dc) += share;
                }
            }
            g = std::move(fine);
        }
        for (size_t i = 0; i < g.size(); ++i) out.gradient.data[i] += g.data[i] * inv_n;
    }
    return out;
}

SrLossValue sr_loss(std::span<const DepthPairSample> pred, std::span<const DepthPairSample> gt,
                    double tau) {
    if (pred.size() != gt.size()) throw DataError("sr_loss: pair list lengths differ");
    if (!(tau > 0.0)) throw ConfigError("sr_loss: tau must be positive");
    SrLossValue out;
    out.gradient.assign(pred.size(), {0.0, 0.0});
    out.labels.assign(pred.size(), 0);
    if (pred.empty()) return out;

    auto softplus = [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    };

    double sum = 0.0;
    int counted = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double g0 = gt[i].d0, g1 = gt[i].d1;
        if (g0 <= 0.0 || g1 <= 0.0) {
            ++out.skipped;
            continue;
        }
        int8_t label = 0;
        if (g0 / g1 >= 1.0 + tau) label = 1;
        else if (g1 / g0 >= 1.0 + tau) label = -1;
        out.labels[i] = label;
        const double diff = pred[i].d0 - pred[i].d1;
        if (label != 0) {
            sum += softplus(-label * diff);
            const double sigma = 1.0 / (1.0 + std::exp(label * diff));
            out.gradient[i] = {-label * sigma, label * sigma};
        } else {
            sum += diff * diff;
            out.gradient[i] = {2.0 * diff, -2.0 * diff};
        }
        ++counted;
    }
    if (counted == 0) return out;
    const double inv_n = 1.0 / counted;
    out.value = sum * inv_n;
    for (auto &g : out.gradient) {
        g[0] *= inv_n;
        g[1] *= inv_n;
    }
    return out;
}

LossValue mae_loss(const DepthMap &pred, const DepthMap &gt) {
    check_same_shape(pred, gt, "mae_loss");
    LossValue out;
    out.gradient = Grid<double>(pred.height(), pred.width(), 0.0);
    double sum = 0.0;
    int n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        sum += std::abs(pred.values.data[i] - gt.values.data[i]);
        ++n;
    }
    if (n == 0) throw DataError("mae_loss: empty overlap");
    const double inv_n = 1.0 / n;
    out.value = sum * inv_n;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        out.gradient.data[i] = sign_sub(pred.values.data[i] - gt.values.data[i]) * inv_n;
    }
    return out;
}

LossValue ssmae_loss(const DepthMap &pred, const DepthMap &gt) {
    const auto [s, t] = align_scale_shift(pred, gt);
    LossValue out;
    out.gradient = Grid<double>(pred.height(), pred.width(), 0.0);
    double sum = 0.0;
    int n = 0;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        sum += std::abs(s * pred.values.data[i] + t - gt.values.data[i]);
        ++n;
    }
    const double inv_n = 1.0 / n;
    out.value = sum * inv_n;
    for (size_t i = 0; i < pred.mask.size(); ++i) {
        if (!pred.mask.data[i] || !gt.mask.data[i]) continue;
        out.gradient.data[i] =
            sign_sub(s * pred.values.data[i] + t - gt.values.data[i]) * s * inv_n;
    }
    return out;
}

QualityTier quality_tier_from_string(const std::string &name) {
    if (name == "high") return QualityTier::High;
    if (name == "medium") return QualityTier::Medium;
    if (name == "low") return QualityTier::Low;
    throw ConfigError("unknown quality tier: " + name);
}

std::string to_string(LossTerm term) {
    switch (term) {
    case LossTerm::Sr: return "sr";
    case LossTerm::Ilnr: return "ilnr";
    case LossTerm::PwnEdges: return "pwn_edges";
    case LossTerm::PwnPlanes: return "pwn_planes";
    case LossTerm::Msg: return "msg";
    case LossTerm::Mae: return "mae";
    }
    return "?";
}

std::set<LossTerm> route_losses(QualityTier tier, LossTask task) {
    using T = LossTerm;
    if (task == LossTask::Prediction) {
        switch (tier) {
        case QualityTier::High: return {T::Sr, T::Ilnr, T::PwnEdges, T::PwnPlanes, T::Msg};
        case QualityTier::Medium: return {T::Sr, T::Ilnr, T::PwnPlanes, T::Msg};
        case QualityTier::Low: return {T::Sr};
        }
    } else {
        switch (tier) {
        case QualityTier::High: return {T::Sr, T::Mae, T::PwnEdges, T::PwnPlanes};
        case QualityTier::Medium: return {T::Sr, T::Mae, T::PwnPlanes};
        case QualityTier::Low:
            throw ConfigError("route_losses: no completion loss row for low-quality data");
        }
    }
    throw ConfigError("route_losses: invalid tier/task");
}

} // namespace depthshape
