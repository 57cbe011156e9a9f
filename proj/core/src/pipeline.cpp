#include "depthshape/pipeline.hpp"

#include "depthshape/batch_schedule.hpp"
#include "depthshape/depth_io.hpp"
#include "depthshape/depth_losses.hpp"
#include "depthshape/eval_metrics.hpp"
#include "depthshape/gradcheck.hpp"
#include "depthshape/scene_synth.hpp"
#include "depthshape/shape_recovery.hpp"
#include "depthshape/sparse_completion.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace depthshape {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char *kVersion = "0.1.0";

/// JSON serialization with fixed 17-significant-digit floats so result files
/// are byte-reproducible across runs and platforms.
void dump17(const json &j, std::string &out, int depth) {
    const std::string pad(static_cast<size_t>(2 * depth), ' ');
    const std::string pad_in(static_cast<size_t>(2 * (depth + 1)), ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        size_t i = 0;
        for (auto it = j.begin(); it != j.end(); ++it, ++i) {
            out += pad_in + json(it.key()).dump() + ": ";
            dump17(it.value(), out, depth + 1);
            if (i + 1 < j.size()) out += ',';
            out += '\n';
        }
        out += pad + "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        out += "[\n";
        for (size_t i = 0; i < j.size(); ++i) {
            out += pad_in;
            dump17(j[i], out, depth + 1);
            if (i + 1 < j.size()) out += ',';
            out += '\n';
        }
        out += pad + "]";
        return;
    }
    case json::value_t::number_float: {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.17g", j.get<double>());
        out += buf;
        return;
    }
    default:
        out += j.dump();
        return;
    }
}

std::string dump17(const json &j) {
    std::string out;
    dump17(j, out, 0);
    out += '\n';
    return out;
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
}

std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json config_json(const RunConfig &c) {
    json j;
    j["seed"] = c.seed;
    j["out"] = c.out.string();
    j["input"] = c.input.string();
    j["gt"] = c.gt.string();
    j["camera"] = c.camera.string();
    j["count"] = c.count;
    j["width"] = c.width;
    j["height"] = c.height;
    j["fov_deg"] = c.fov_deg;
    j["mode"] = c.mode;
    j["fov_init_deg"] = c.fov_init_deg;
    j["shift_lo"] = c.shift_lo;
    j["shift_hi"] = c.shift_hi;
    j["shift_step"] = c.shift_step;
    j["shift_tol"] = c.shift_tol;
    j["focal_lo"] = c.focal_lo;
    j["focal_hi"] = c.focal_hi;
    j["focal_step"] = c.focal_step;
    j["focal_tol"] = c.focal_tol;
    j["cluster_eps"] = c.cluster_eps;
    j["cluster_min_pts"] = c.cluster_min_pts;
    j["normal_window"] = c.normal_window;
    j["sr_tau"] = c.sr_tau;
    j["msg_scales"] = c.msg_scales;
    j["grad_fixtures"] = c.grad_fixtures;
    j["grad_tol"] = c.grad_tol;
    j["pattern"] = c.pattern;
    j["pattern_count"] = c.pattern_count;
    j["pattern_quantile"] = c.pattern_quantile;
    j["border_fraction"] = c.border_fraction;
    j["tof_downsample"] = c.tof_downsample;
    j["tof_far_quantile"] = c.tof_far_quantile;
    j["lidar_lines"] = c.lidar_lines;
    j["fast_threshold"] = c.fast_threshold;
    j["outlier_fraction"] = c.outlier_fraction;
    j["prior_scale"] = c.prior_scale;
    j["prior_shift"] = c.prior_shift;
    j["align"] = c.align;
    return j;
}

} // namespace

std::string config_to_json(const RunConfig &config) { return dump17(config_json(config)); }

void apply_config_json(RunConfig &c, const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    const auto get = [&](const char *key, auto &field) {
        using T = std::decay_t<decltype(field)>;
        if (j.contains(key)) {
            try {
                field = j.at(key).get<T>();
            } catch (const json::exception &e) {
                throw ConfigError(std::string("config field '") + key + "': " + e.what());
            }
        }
    };
    std::string out_s = c.out.string(), input_s = c.input.string(), gt_s = c.gt.string(),
                cam_s = c.camera.string();
    get("seed", c.seed);
    get("out", out_s);
    get("input", input_s);
    get("gt", gt_s);
    get("camera", cam_s);
    c.out = out_s;
    c.input = input_s;
    c.gt = gt_s;
    c.camera = cam_s;
    get("count", c.count);
    get("width", c.width);
    get("height", c.height);
    get("fov_deg", c.fov_deg);
    get("mode", c.mode);
    get("fov_init_deg", c.fov_init_deg);
    get("shift_lo", c.shift_lo);
    get("shift_hi", c.shift_hi);
    get("shift_step", c.shift_step);
    get("shift_tol", c.shift_tol);
    get("focal_lo", c.focal_lo);
    get("focal_hi", c.focal_hi);
    get("focal_step", c.focal_step);
    get("focal_tol", c.focal_tol);
    get("cluster_eps", c.cluster_eps);
    get("cluster_min_pts", c.cluster_min_pts);
    get("normal_window", c.normal_window);
    get("sr_tau", c.sr_tau);
    get("msg_scales", c.msg_scales);
    get("grad_fixtures", c.grad_fixtures);
    get("grad_tol", c.grad_tol);
    get("pattern", c.pattern);
    get("pattern_count", c.pattern_count);
    get("pattern_quantile", c.pattern_quantile);
    get("border_fraction", c.border_fraction);
    get("tof_downsample", c.tof_downsample);
    get("tof_far_quantile", c.tof_far_quantile);
    get("lidar_lines", c.lidar_lines);
    get("fast_threshold", c.fast_threshold);
    get("outlier_fraction", c.outlier_fraction);
    get("prior_scale", c.prior_scale);
    get("prior_shift", c.prior_shift);
    get("align", c.align);
}

uint64_t config_hash(const RunConfig &config) {
    const std::string text = config_to_json(config);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string camera_to_json(const CameraIntrinsics &cam) {
    json j;
    j["f"] = cam.f;
    j["u0"] = cam.u0;
    j["v0"] = cam.v0;
    j["width"] = cam.width;
    j["height"] = cam.height;
    return dump17(j);
}

CameraIntrinsics camera_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw DataError(std::string("camera parse error: ") + e.what());
    }
    CameraIntrinsics cam;
    cam.f = j.at("f").get<double>();
    cam.u0 = j.at("u0").get<double>();
    cam.v0 = j.at("v0").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.validate();
    return cam;
}

namespace {

void write_manifest(const RunConfig &config, const std::string &command,
                    const std::vector<std::string> &inputs,
                    const std::vector<std::string> &outputs) {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = config.seed;
    char hash_buf[32];
    std::snprintf(hash_buf, sizeof hash_buf, "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    j["config_hash"] = hash_buf;
    j["config"] = config_json(config);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_text(config.out / "manifest.json", dump17(j));
    write_text(config.out / "effective_config.json", config_to_json(config));
}

CameraIntrinsics camera_for(const RunConfig &config, const DepthMap &depth) {
    if (!config.camera.empty()) return camera_from_json(read_text(config.camera));
    return CameraIntrinsics::from_fov(config.fov_init_deg, depth.width(), depth.height());
}

ShiftRecoveryOptions shift_options(const RunConfig &c) {
    ShiftRecoveryOptions o;
    o.search = {c.shift_lo, c.shift_hi, c.shift_step, c.shift_tol};
    o.cluster_eps = c.cluster_eps;
    o.cluster_min_pts = c.cluster_min_pts;
    o.normal_window = c.normal_window;
    return o;
}

FocalRecoveryOptions focal_options(const RunConfig &c) {
    FocalRecoveryOptions o;
    o.search = {c.focal_lo, c.focal_hi, c.focal_step, c.focal_tol};
    o.cluster_eps = c.cluster_eps;
    o.cluster_min_pts = c.cluster_min_pts;
    o.normal_window = c.normal_window;
    return o;
}

SparsityPattern pattern_from(const RunConfig &c) {
    SparsityPattern p;
    p.seed = Rng::derive_seed(c.seed, 17);
    if (c.pattern == "uniform") p.kind = SparsityPattern::Kind::Uniform;
    else if (c.pattern == "features") p.kind = SparsityPattern::Kind::Features;
    else if (c.pattern == "polygon_hole") p.kind = SparsityPattern::Kind::PolygonHole;
    else if (c.pattern == "distance_hole") p.kind = SparsityPattern::Kind::DistanceHole;
    else if (c.pattern == "unpaired_fov") p.kind = SparsityPattern::Kind::UnpairedFov;
    else if (c.pattern == "sparse_tof") p.kind = SparsityPattern::Kind::SparseTof;
    else if (c.pattern == "short_range") p.kind = SparsityPattern::Kind::ShortRange;
    else if (c.pattern == "lidar_lines") p.kind = SparsityPattern::Kind::LidarLines;
    else throw ConfigError("unknown sparsity pattern: " + c.pattern);
    p.count = c.pattern_count;
    p.quantile = c.pattern_quantile;
    p.border_fraction = c.border_fraction;
    p.downsample = c.tof_downsample;
    p.far_quantile = c.tof_far_quantile;
    p.lines = c.lidar_lines;
    p.threshold = c.fast_threshold;
    return p;
}

} // namespace

void cmd_synth(const RunConfig &config) {
    fs::create_directories(config.out);
    const CameraIntrinsics cam =
        CameraIntrinsics::from_fov(config.fov_deg, config.width, config.height);
    std::vector<std::string> outputs;
    write_text(config.out / "camera.json", camera_to_json(cam));
    outputs.push_back("camera.json");
    for (int i = 0; i < config.count; ++i) {
        const uint64_t scene_seed = Rng::derive_seed(config.seed, static_cast<uint64_t>(i));
        const SyntheticScene scene = generate_scene(scene_seed);
        const RenderResult render = render_depth(scene, cam);
        const std::string tag = std::to_string(i);
        write_text(config.out / ("scene_" + tag + ".json"), scene_to_json(scene));
        write_pfm(render.depth, config.out / ("depth_" + tag + ".pfm"));
        Grid<uint8_t> labels(render.labels.height, render.labels.width, 0);
        for (size_t k = 0; k < labels.size(); ++k)
            labels.data[k] = static_cast<uint8_t>(render.labels.data[k] + 1); // 0 = unlabeled
        write_mask_pgm(labels, config.out / ("labels_" + tag + ".pgm"));
        outputs.push_back("scene_" + tag + ".json");
        outputs.push_back("depth_" + tag + ".pfm");
        outputs.push_back("labels_" + tag + ".pgm");
    }
    write_manifest(config, "synth", {}, outputs);
}

void cmd_distort(const RunConfig &config) {
    if (config.input.empty()) throw ConfigError("distort: --input depth file required");
    fs::create_directories(config.out);
    DepthMap depth = read_pfm(config.input);
    if (depth.unit == DepthUnit::Metric) depth = normalize_scale(depth);
    const CameraIntrinsics cam = camera_for(config, depth);

    Rng rng(config.seed);
    const PerturbationSample p = sample_perturbation(rng);
    DistortionMode mode;
    if (config.mode == "shift") mode = DistortionMode::Shift;
    else if (config.mode == "focal") mode = DistortionMode::Focal;
    else throw ConfigError("distort: mode must be shift or focal");

    const DistortedDepth distorted = distort_depth(depth, cam, p, mode);
    write_pfm(distorted.depth, config.out / "distorted.pfm");
    write_text(config.out / "camera.json", camera_to_json(distorted.cam));
    const PointCloud cloud = unproject(distorted.depth, distorted.cam);
    write_ply(cloud, config.out / "distorted.ply");

    json j;
    j["mode"] = config.mode;
    j["delta_d"] = p.delta_d;
    j["alpha_f"] = p.alpha_f;
    j["applied_delta_d"] = mode == DistortionMode::Shift ? p.delta_d : 0.0;
    j["applied_alpha_f"] = mode == DistortionMode::Focal ? p.alpha_f : 1.0;
    j["masked_pixels"] = distorted.masked_pixels;
    write_text(config.out / "perturbation.json", dump17(j));
    write_manifest(config, "distort", {config.input.string()},
                   {"distorted.pfm", "camera.json", "distorted.ply", "perturbation.json"});
}

void cmd_recover(const RunConfig &config) {
    if (config.input.empty()) throw ConfigError("recover: --input depth file required");
    fs::create_directories(config.out);
    const DepthMap depth = read_pfm(config.input);
    const CameraIntrinsics cam = camera_for(config, depth);

    json j;
    j["mode"] = config.mode;
    PointCloud cloud;
    if (config.mode == "shift") {
        const RecoveryResult r = recover_shift(depth, cam, shift_options(config));
        j["delta_d"] = r.delta_d;
        j["alpha_f"] = r.alpha_f;
        j["segments_used"] = r.segments_used;
        DepthMap corrected = depth;
        for (size_t i = 0; i < corrected.mask.size(); ++i) {
            if (!corrected.mask.data[i]) continue;
            corrected.values.data[i] += r.delta_d;
            if (corrected.values.data[i] <= 0.0) corrected.mask.data[i] = 0;
        }
        cloud = unproject(corrected, cam);
    } else if (config.mode == "focal") {
        const RecoveryResult r = recover_focal(depth, cam, focal_options(config));
        j["delta_d"] = r.delta_d;
        j["alpha_f"] = r.alpha_f;
        j["segments_used"] = r.segments_used;
        j["corrected_f"] = cam.f / r.alpha_f;
        CameraIntrinsics corrected_cam = cam;
        corrected_cam.f = cam.f / r.alpha_f;
        cloud = unproject(depth, corrected_cam);
    } else if (config.mode == "full") {
        ReconstructOptions opts{shift_options(config), focal_options(config)};
        const SceneReconstruction rec = reconstruct_scene(depth, cam, opts);
        j["delta_d"] = rec.shift.delta_d;
        j["alpha_f"] = rec.focal.alpha_f;
        j["segments_used_shift"] = rec.shift.segments_used;
        j["segments_used_focal"] = rec.focal.segments_used;
        j["corrected_f"] = rec.corrected_cam.f;
        cloud = rec.cloud;
    } else {
        throw ConfigError("recover: mode must be shift, focal, or full");
    }
    write_text(config.out / "recovery.json", dump17(j));
    write_ply(cloud, config.out / "corrected.ply");
    write_manifest(config, "recover", {config.input.string()}, {"recovery.json", "corrected.ply"});
}

void cmd_complete(const RunConfig &config) {
    if (config.input.empty()) throw ConfigError("complete: --input depth file required");
    fs::create_directories(config.out);
    const DepthMap gt = read_pfm(config.input);
    if (!(config.prior_scale > 0.0)) throw ConfigError("complete: prior_scale must be positive");

    SparseDepth sparse = gen_sparsity(gt, pattern_from(config));
    if (config.outlier_fraction > 0.0) {
        Rng rng(Rng::derive_seed(config.seed, 29));
        sparse = inject_outliers(sparse, config.outlier_fraction, rng);
    }

    DepthMap prior = gt;
    prior.unit = DepthUnit::Affine;
    for (size_t i = 0; i < prior.mask.size(); ++i)
        if (prior.mask.data[i])
            prior.values.data[i] = (prior.values.data[i] - config.prior_shift) / config.prior_scale;

    const RobustAlignment align = robust_align_sparse(prior, sparse);
    const DepthMap completed = complete_depth(prior, sparse);
    const MetricsReport metrics = evaluate_depth(completed, gt, AlignMode::None);

    write_sparse_csv(sparse, config.out / "sparse.csv", gt.unit);
    write_pfm(completed, config.out / "completed.pfm");
    write_text(config.out / "metrics.csv", metrics_to_csv(metrics));
    write_text(config.out / "metrics.txt", metrics_to_text(metrics));
    json j;
    j["s"] = align.s;
    j["t"] = align.t;
    j["iterations"] = align.iterations;
    j["overlap"] = align.overlap;
    j["samples"] = sparse.sample_count();
    j["injected_outliers"] = sparse.outlier_indices.size();
    int flagged = 0;
    for (int idx : sparse.outlier_indices) flagged += align.inliers[idx] == 0;
    j["injected_outliers_flagged"] = flagged;
    write_text(config.out / "alignment.json", dump17(j));
    write_manifest(config, "complete", {config.input.string()},
                   {"sparse.csv", "completed.pfm", "metrics.csv", "metrics.txt", "alignment.json"});
}

void cmd_eval(const RunConfig &config) {
    if (config.input.empty() || config.gt.empty())
        throw ConfigError("eval: --input and --gt depth files required");
    fs::create_directories(config.out);
    const DepthMap pred = read_pfm(config.input);
    const DepthMap gt = read_pfm(config.gt);
    const MetricsReport metrics = evaluate_depth(pred, gt, align_mode_from_string(config.align));
    write_text(config.out / "metrics.csv", metrics_to_csv(metrics));
    write_text(config.out / "metrics.txt", metrics_to_text(metrics));
    write_manifest(config, "eval", {config.input.string(), config.gt.string()},
                   {"metrics.csv", "metrics.txt"});
}

void cmd_losses(const RunConfig &config) {
    fs::create_directories(config.out);
    const std::vector<LossGradReport> reports =
        loss_gradcheck_suite(config.seed, config.grad_fixtures);
    json j;
    j["tolerance"] = config.grad_tol;
    json list = json::array();
    bool pass = true;
    for (const LossGradReport &r : reports) {
        list.push_back({{"loss", r.loss}, {"max_rel_error", r.max_rel_error},
                        {"fixtures", r.fixtures}});
        pass = pass && r.max_rel_error <= config.grad_tol;
    }
    j["losses"] = list;
    j["pass"] = pass;
    write_text(config.out / "gradcheck.json", dump17(j));
    write_manifest(config, "losses", {}, {"gradcheck.json"});
    if (!pass) throw NumericalError("losses: gradient check exceeded tolerance");
}

int run_pipeline(const std::string &command, const RunConfig &config) {
    try {
        if (command == "synth") cmd_synth(config);
        else if (command == "distort") cmd_distort(config);
        else if (command == "recover") cmd_recover(config);
        else if (command == "complete") cmd_complete(config);
        else if (command == "eval") cmd_eval(config);
        else if (command == "losses") cmd_losses(config);
        else throw ConfigError("unknown command: " + command);
        return 0;
    } catch (const Error &e) {
        std::error_code ec;
        fs::create_directories(config.out, ec);
        json j;
        j["command"] = command;
        j["error"] = e.what();
        j["exit_code"] = e.exit_code();
        if (!ec) write_text(config.out / "error.json", dump17(j));
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception &e) {
        std::error_code ec;
        fs::create_directories(config.out, ec);
        json j;
        j["command"] = command;
        j["error"] = e.what();
        j["exit_code"] = 4;
        if (!ec) write_text(config.out / "error.json", dump17(j));
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace depthshape
