// Command-line surface for the depthshape library: scene synthesis, depth
// distortion, shift/focal recovery, sparse completion, evaluation, and the
// loss gradient audit. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical failure.

#include <CLI11.hpp>

#include "depthshape/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw depthshape::ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"depthshape: scene-shape reconstruction toolkit for depth maps"};
    app.require_subcommand(1);

    depthshape::RunConfig flags; // flag values land here
    std::string config_file;

    // Flags shared by every subcommand; CLI11 count() tells us which were set.
    const auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--config", config_file, "JSON config file (flags take precedence)");
        cmd->add_option("--seed", flags.seed, "random seed");
        cmd->add_option("--out", flags.out, "output directory");
        return cmd;
    };

    CLI::App *synth = add_common(app.add_subcommand("synth", "render synthetic scene fixtures"));
    synth->add_option("--count", flags.count, "number of scenes");
    synth->add_option("--width", flags.width, "render width");
    synth->add_option("--height", flags.height, "render height");
    synth->add_option("--fov", flags.fov_deg, "camera field of view (degrees)");

    CLI::App *distort =
        add_common(app.add_subcommand("distort", "apply a sampled shift/focal perturbation"));
    distort->add_option("--input", flags.input, "input depth map (PFM)")->required();
    distort->add_option("--mode", flags.mode, "shift | focal");
    distort->add_option("--camera", flags.camera, "camera JSON (default: FOV init)");
    distort->add_option("--fov-init", flags.fov_init_deg, "initial FOV when no camera given");

    CLI::App *recover =
        add_common(app.add_subcommand("recover", "recover shift/focal from a distorted depth map"));
    recover->add_option("--input", flags.input, "input depth map (PFM)")->required();
    recover->add_option("--mode", flags.mode, "shift | focal | full");
    recover->add_option("--camera", flags.camera, "camera JSON (default: FOV init)");
    recover->add_option("--fov-init", flags.fov_init_deg, "initial FOV when no camera given");
    recover->add_option("--shift-lo", flags.shift_lo, "shift search lower bound");
    recover->add_option("--shift-hi", flags.shift_hi, "shift search upper bound");
    recover->add_option("--shift-step", flags.shift_step, "shift coarse grid step");
    recover->add_option("--shift-tol", flags.shift_tol, "shift refinement tolerance");
    recover->add_option("--focal-lo", flags.focal_lo, "focal search lower bound");
    recover->add_option("--focal-hi", flags.focal_hi, "focal search upper bound");
    recover->add_option("--focal-step", flags.focal_step, "focal coarse grid step");
    recover->add_option("--focal-tol", flags.focal_tol, "focal refinement tolerance");
    recover->add_option("--cluster-eps", flags.cluster_eps, "DBSCAN eps");
    recover->add_option("--cluster-min-pts", flags.cluster_min_pts, "DBSCAN min points");
    recover->add_option("--normal-window", flags.normal_window, "normal estimation window");

    CLI::App *complete =
        add_common(app.add_subcommand("complete", "sparsify and complete a depth map"));
    complete->add_option("--input", flags.input, "ground-truth depth map (PFM)")->required();
    complete->add_option("--pattern", flags.pattern,
                         "uniform | features | polygon_hole | distance_hole | unpaired_fov | "
                         "sparse_tof | short_range | lidar_lines");
    complete->add_option("--pattern-count", flags.pattern_count, "uniform sample count");
    complete->add_option("--pattern-quantile", flags.pattern_quantile,
                         "distance/short-range quantile");
    complete->add_option("--border-fraction", flags.border_fraction, "unpaired FOV band fraction");
    complete->add_option("--tof-downsample", flags.tof_downsample, "sparse ToF grid stride");
    complete->add_option("--tof-far-quantile", flags.tof_far_quantile, "sparse ToF far cutoff");
    complete->add_option("--lidar-lines", flags.lidar_lines, "scanline count");
    complete->add_option("--fast-threshold", flags.fast_threshold, "FAST-9 threshold");
    complete->add_option("--outlier-fraction", flags.outlier_fraction, "injected outlier fraction");
    complete->add_option("--prior-scale", flags.prior_scale, "prior affine scale");
    complete->add_option("--prior-shift", flags.prior_shift, "prior affine shift");

    CLI::App *eval = add_common(app.add_subcommand("eval", "compare two depth maps"));
    eval->add_option("--input", flags.input, "predicted depth map (PFM)")->required();
    eval->add_option("--gt", flags.gt, "ground-truth depth map (PFM)")->required();
    eval->add_option("--align", flags.align, "none | scale | scale_shift");

    CLI::App *losses =
        add_common(app.add_subcommand("losses", "evaluate the loss suite and gradient checks"));
    losses->add_option("--grad-fixtures", flags.grad_fixtures, "gradient-check fixtures");
    losses->add_option("--grad-tol", flags.grad_tol, "max relative gradient error");
    losses->add_option("--sr-tau", flags.sr_tau, "ranking loss tau");
    losses->add_option("--msg-scales", flags.msg_scales, "multi-scale gradient levels");

    CLI11_PARSE(app, argc, argv);

    CLI::App *active = app.get_subcommands().front();
    try {
        // Precedence: defaults < config file < explicit flags.
        depthshape::RunConfig config;
        if (!config_file.empty()) depthshape::apply_config_json(config, read_file(config_file));
        depthshape::RunConfig merged = config;
        const auto was_set = [&](const std::string &name) {
            const CLI::Option *opt = active->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };
        if (was_set("--seed")) merged.seed = flags.seed;
        if (was_set("--out")) merged.out = flags.out;
        if (was_set("--input")) merged.input = flags.input;
        if (was_set("--gt")) merged.gt = flags.gt;
        if (was_set("--camera")) merged.camera = flags.camera;
        if (was_set("--count")) merged.count = flags.count;
        if (was_set("--width")) merged.width = flags.width;
        if (was_set("--height")) merged.height = flags.height;
        if (was_set("--fov")) merged.fov_deg = flags.fov_deg;
        if (was_set("--mode")) merged.mode = flags.mode;
        if (was_set("--fov-init")) merged.fov_init_deg = flags.fov_init_deg;
        if (was_set("--shift-lo")) merged.shift_lo = flags.shift_lo;
        if (was_set("--shift-hi")) merged.shift_hi = flags.shift_hi;
        if (was_set("--shift-step")) merged.shift_step = flags.shift_step;
        if (was_set("--shift-tol")) merged.shift_tol = flags.shift_tol;
        if (was_set("--focal-lo")) merged.focal_lo = flags.focal_lo;
        if (was_set("--focal-hi")) merged.focal_hi = flags.focal_hi;
        if (was_set("--focal-step")) merged.focal_step = flags.focal_step;
        if (was_set("--focal-tol")) merged.focal_tol = flags.focal_tol;
        if (was_set("--cluster-eps")) merged.cluster_eps = flags.cluster_eps;
        if (was_set("--cluster-min-pts")) merged.cluster_min_pts = flags.cluster_min_pts;
        if (was_set("--normal-window")) merged.normal_window = flags.normal_window;
        if (was_set("--grad-fixtures")) merged.grad_fixtures = flags.grad_fixtures;
        if (was_set("--grad-tol")) merged.grad_tol = flags.grad_tol;
        if (was_set("--sr-tau")) merged.sr_tau = flags.sr_tau;
        if (was_set("--msg-scales")) merged.msg_scales = flags.msg_scales;
        if (was_set("--pattern")) merged.pattern = flags.pattern;
        if (was_set("--pattern-count")) merged.pattern_count = flags.pattern_count;
        if (was_set("--pattern-quantile")) merged.pattern_quantile = flags.pattern_quantile;
        if (was_set("--border-fraction")) merged.border_fraction = flags.border_fraction;
        if (was_set("--tof-downsample")) merged.tof_downsample = flags.tof_downsample;
        if (was_set("--tof-far-quantile")) merged.tof_far_quantile = flags.tof_far_quantile;
        if (was_set("--lidar-lines")) merged.lidar_lines = flags.lidar_lines;
        if (was_set("--fast-threshold")) merged.fast_threshold = flags.fast_threshold;
        if (was_set("--outlier-fraction")) merged.outlier_fraction = flags.outlier_fraction;
        if (was_set("--prior-scale")) merged.prior_scale = flags.prior_scale;
        if (was_set("--prior-shift")) merged.prior_shift = flags.prior_shift;
        if (was_set("--align")) merged.align = flags.align;

        return depthshape::run_pipeline(active->get_name(), merged);
    } catch (const depthshape::Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    }
}
