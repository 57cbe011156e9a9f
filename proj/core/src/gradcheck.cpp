#include "depthshape/gradcheck.hpp"

#include "depthshape/depth_losses.hpp"

#include <cmath>

namespace depthshape {

GradCheckResult check_gradient(const std::function<double(std::span<const double>)> &value,
                               std::span<const double> x, std::span<const double> analytic,
                               double h, double floor) {
    if (x.size() != analytic.size()) throw ConfigError("check_gradient: size mismatch");
    // Normalize against the largest analytic entry: zero-gradient coordinates
    // are then judged on the shared scale instead of their own FD noise.
    double scale = floor;
    for (double g : analytic) scale = std::max(scale, std::abs(g));

    GradCheckResult out;
    out.coordinates = static_cast<int>(x.size());
    std::vector<double> probe(x.begin(), x.end());
    for (size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = value(probe);
        probe[i] = orig - h;
        const double down = value(probe);
        probe[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double abs_err = std::abs(fd - analytic[i]);
        out.max_abs_error = std::max(out.max_abs_error, abs_err);
        out.max_rel_error = std::max(out.max_rel_error, abs_err / scale);
    }
    return out;
}

namespace {

DepthMap random_depth(Rng &rng, int h, int w, double lo, double hi) {
    DepthMap map(h, w, DepthUnit::Metric);
    for (size_t i = 0; i < map.mask.size(); ++i) {
        map.values.data[i] = rng.uniform(lo, hi);
        map.mask.data[i] = 1;
    }
    return map;
}

/// Offsets on a 0.05 lattice: the absolute-value kinks either sit exactly on
/// zero (where symmetric differences match the 0 subgradient) or are at least
/// one lattice step away from it, far beyond the FD step.
DepthMap lattice_offset(const DepthMap &base, Rng &rng, bool signed_offsets, int max_steps) {
    DepthMap out = base;
    for (size_t i = 0; i < out.mask.size(); ++i) {
        const int k = static_cast<int>(rng.uniform_int(signed_offsets ? 1 : 0, max_steps));
        const double sign = signed_offsets ? (rng.uniform() < 0.5 ? -1.0 : 1.0) : 1.0;
        out.values.data[i] += sign * 0.05 * k;
    }
    return out;
}

Eigen::Vector3d random_unit(Rng &rng) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    while (v.norm() < 1e-6) v = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    return v.normalized();
}

DepthMap from_flat(const DepthMap &shape, std::span<const double> flat) {
    DepthMap out = shape;
    for (size_t i = 0; i < out.values.size(); ++i) out.values.data[i] = flat[i];
    return out;
}

double track(std::vector<LossGradReport> &reports, const std::string &name,
             const GradCheckResult &result) {
    for (auto &r : reports) {
        if (r.loss == name) {
            r.max_rel_error = std::max(r.max_rel_error, result.max_rel_error);
            ++r.fixtures;
            return r.max_rel_error;
        }
    }
    reports.push_back({name, result.max_rel_error, 1});
    return result.max_rel_error;
}

} // namespace

std::vector<LossGradReport> loss_gradcheck_suite(uint64_t seed, int fixtures, int height,
                                                 int width, double h) {
    std::vector<LossGradReport> reports;
    for (int f = 0; f < fixtures; ++f) {
        Rng rng(Rng::derive_seed(seed, static_cast<uint64_t>(f)));
        const DepthMap gt = random_depth(rng, height, width, 0.5, 8.0);

        { // ILNR: prediction offset from the normalized target by >= 0.05
            const DepthMap target = normalize_variants(gt, NormalizeMethod::Ilnr);
            const DepthMap pred = lattice_offset(target, rng, true, 5);
            const LossValue loss = ilnr_loss(pred, gt);
            const auto value = [&](std::span<const double> x) {
                return ilnr_loss(from_flat(pred, x), gt).value;
            };
            track(reports, "ilnr",
                  check_gradient(value, pred.values.data, loss.gradient.data, h));
        }
        { // MSG on dyadic values: sums, differences and 2x2 averages are all
          // exact in binary floating point, so nominally-zero difference
          // terms sit exactly on the |.| kink where the symmetric central
          // difference matches the 0 subgradient.
            DepthMap gt_norm(height, width, DepthUnit::Affine);
            DepthMap pred(height, width, DepthUnit::Affine);
            for (size_t i = 0; i < gt_norm.mask.size(); ++i) {
                gt_norm.values.data[i] = static_cast<double>(rng.uniform_int(0, 2048)) * 0x1.0p-10;
                gt_norm.mask.data[i] = 1;
                pred.values.data[i] =
                    gt_norm.values.data[i] +
                    static_cast<double>(rng.uniform_int(0, 5)) * 0x1.0p-4;
                pred.mask.data[i] = 1;
            }
            const MsgLossValue loss = msg_loss(pred, gt_norm, 4);
            const auto value = [&](std::span<const double> x) {
                return msg_loss(from_flat(pred, x), gt_norm, 4).value;
            };
            track(reports, "msg",
                  check_gradient(value, pred.values.data, loss.gradient.data, h));
        }
        { // MAE
            const DepthMap pred = lattice_offset(gt, rng, true, 5);
            const LossValue loss = mae_loss(pred, gt);
            const auto value = [&](std::span<const double> x) {
                return mae_loss(from_flat(pred, x), gt).value;
            };
            track(reports, "mae",
                  check_gradient(value, pred.values.data, loss.gradient.data, h));
        }
        { // SR: ground-truth ratios pinned away from the 1 + tau boundary
            const int n_pairs = 64;
            std::vector<DepthPairSample> pred(n_pairs), gtp(n_pairs);
            for (int i = 0; i < n_pairs; ++i) {
                const double g0 = rng.uniform(1.0, 5.0);
                const int kind = static_cast<int>(rng.uniform_int(0, 2));
                gtp[static_cast<size_t>(i)] = {g0, kind == 0   ? g0 / 1.5
                                                   : kind == 1 ? g0 * 1.5
                                                               : g0};
                pred[static_cast<size_t>(i)] = {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)};
            }
            const SrLossValue loss = sr_loss(pred, gtp, 0.02);
            std::vector<double> x, g;
            for (int i = 0; i < n_pairs; ++i) {
                x.push_back(pred[static_cast<size_t>(i)].d0);
                x.push_back(pred[static_cast<size_t>(i)].d1);
                g.push_back(loss.gradient[static_cast<size_t>(i)][0]);
                g.push_back(loss.gradient[static_cast<size_t>(i)][1]);
            }
            const auto value = [&](std::span<const double> flat) {
                std::vector<DepthPairSample> p(n_pairs);
                for (int i = 0; i < n_pairs; ++i)
                    p[static_cast<size_t>(i)] = {flat[static_cast<size_t>(2 * i)],
                                                 flat[static_cast<size_t>(2 * i) + 1]};
                return sr_loss(p, gtp, 0.02).value;
            };
            track(reports, "sr", check_gradient(value, x, g, h));
        }
        { // PWN: re-roll pairs whose dot difference sits near the kink
            const int n_pairs = 64;
            std::vector<NormalPair> pred(n_pairs), gtp(n_pairs);
            for (int i = 0; i < n_pairs; ++i) {
                gtp[static_cast<size_t>(i)] = {random_unit(rng), random_unit(rng)};
                do {
                    pred[static_cast<size_t>(i)] = {random_unit(rng), random_unit(rng)};
                } while (std::abs(pred[static_cast<size_t>(i)].a.dot(pred[static_cast<size_t>(i)].b) -
                                  gtp[static_cast<size_t>(i)].a.dot(gtp[static_cast<size_t>(i)].b)) < 1e-3);
            }
            const PwnLossValue loss = pwn_loss(pred, gtp);
            std::vector<double> x, g;
            for (int i = 0; i < n_pairs; ++i) {
                for (int k = 0; k < 3; ++k) x.push_back(pred[static_cast<size_t>(i)].a(k));
                for (int k = 0; k < 3; ++k) x.push_back(pred[static_cast<size_t>(i)].b(k));
                for (int k = 0; k < 3; ++k) g.push_back(loss.grad_a[static_cast<size_t>(i)](k));
                for (int k = 0; k < 3; ++k) g.push_back(loss.grad_b[static_cast<size_t>(i)](k));
            }
            const auto value = [&](std::span<const double> flat) {
                std::vector<NormalPair> p(n_pairs);
                for (int i = 0; i < n_pairs; ++i) {
                    const size_t base = static_cast<size_t>(6 * i);
                    p[static_cast<size_t>(i)].a =
                        Eigen::Vector3d(flat[base], flat[base + 1], flat[base + 2]);
                    p[static_cast<size_t>(i)].b =
                        Eigen::Vector3d(flat[base + 3], flat[base + 4], flat[base + 5]);
                }
                return pwn_loss(p, gtp).value;
            };
            track(reports, "pwn", check_gradient(value, x, g, h));
        }
    }
    return reports;
}

} // namespace depthshape
