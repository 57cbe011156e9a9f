#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "depthshape/rng.hpp"

namespace depthshape {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int coordinates = 0;
};

/// Central-difference gradient verification: perturbs each coordinate of x by
/// +-h, re-evaluates `value`, and compares against the analytic gradient.
/// Relative error per coordinate is |fd - g| / max(|fd|, |g|, floor).
GradCheckResult check_gradient(const std::function<double(std::span<const double>)> &value,
                               std::span<const double> x, std::span<const double> analytic,
                               double h = 1e-5, double floor = 1e-2);

struct LossGradReport {
    std::string loss;
    double max_rel_error = 0.0;
    int fixtures = 0;
};

/// Gradient audit for the loss suite (ILNR, MSG, SR, PWN, MAE) on seeded
/// random fixtures of the given size, constructed to stay bounded away from
/// the losses' non-smooth loci.
std::vector<LossGradReport> loss_gradcheck_suite(uint64_t seed, int fixtures = 20, int height = 16,
                                                 int width = 16, double h = 1e-5);

} // namespace depthshape
