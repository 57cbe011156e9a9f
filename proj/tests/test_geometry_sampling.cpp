#include <doctest.h>

#include "depthshape/geometry_sampling.hpp"
#include "depthshape/scene_synth.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace depthshape;

namespace {

DepthMap constant_map(int h, int w, double v) {
    DepthMap map(h, w, DepthUnit::Metric);
    for (size_t i = 0; i < map.mask.size(); ++i) {
        map.values.data[i] = v;
        map.mask.data[i] = 1;
    }
    return map;
}

} // namespace

TEST_SUITE("geometry_sampling") {

TEST_CASE("constant input has zero edge strength everywhere") {
    const EdgeMap edges = detect_edges(constant_map(16, 16, 3.0));
    for (double s : edges.strength.data) CHECK(s == 0.0);
    for (uint8_t b : edges.binary.data) CHECK(b == 0);
}

TEST_CASE("vertical step edge localizes to the stepping columns") {
    DepthMap map = constant_map(16, 16, 1.0);
    const int c_step = 8; // step between columns 7 and 8
    for (int r = 0; r < 16; ++r)
        for (int c = c_step; c < 16; ++c) map.values.at(r, c) = 2.0;
    const EdgeMap edges = detect_edges(map);
    for (int r = 1; r < 15; ++r)
        for (int c = 1; c < 15; ++c) {
            if (edges.binary.at(r, c)) {
                CHECK(c >= c_step - 1);
                CHECK(c <= c_step + 1);
            }
        }
    // the step itself must be detected
    int hits = 0;
    for (int r = 1; r < 15; ++r) hits += edges.binary.at(r, c_step - 1) || edges.binary.at(r, c_step);
    CHECK(hits >= 14);
}

TEST_CASE("room-render edges cover the plane boundaries") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(19);
    const RenderResult render = render_depth(scene, cam);
    const NormalMap normals = compute_normals(render.depth, cam, 3);
    const EdgeMap edges = detect_edges(normals);

    int boundary = 0, covered = 0;
    for (int r = 2; r + 2 < cam.height; ++r) {
        for (int c = 2; c + 2 < cam.width; ++c) {
            const int label = render.labels.at(r, c);
            const bool is_boundary = render.labels.at(r + 1, c) != label ||
                                     render.labels.at(r, c + 1) != label;
            if (!is_boundary) continue;
            ++boundary;
            bool near_edge = false;
            for (int dr = -1; dr <= 1 && !near_edge; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    if (edges.binary.at(r + dr, c + dc)) {
                        near_edge = true;
                        break;
                    }
            covered += near_edge;
        }
    }
    REQUIRE(boundary > 100);
    CHECK(static_cast<double>(covered) / boundary >= 0.95);
}

TEST_CASE("pairs straddling a two-wall crease are all positive") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(19);
    const RenderResult render = render_depth(scene, cam);
    const EdgeMap edges = detect_edges(render.normals);
    Rng rng(4);
    const PointPairSet pairs = sample_edge_pairs(edges, render.normals, 500, rng);
    REQUIRE(pairs.size() > 50);
    for (size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs.labels[i] == PairLabel::EdgePositive);
        CHECK(pairs.gt_normals[i].a.dot(pairs.gt_normals[i].b) < 0.3);
    }
}

TEST_CASE("textured single plane yields only negatives") {
    // flat wall: all ground-truth normals agree; texture provides image edges
    const int n = 64;
    NormalMap normals(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            normals.normals.at(r, c) = Eigen::Vector3d(0, 0, -1);
            normals.mask.at(r, c) = 1;
        }
    Grid<double> image(n, n, 0.0);
    Rng tex(9);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) image.at(r, c) = ((r / 8 + c / 8) % 2) * 1.0 + tex.uniform() * 0.05;
    const EdgeMap edges = detect_edges_image(image);
    Rng rng(5);
    const PointPairSet pairs = sample_edge_pairs(edges, normals, 300, rng);
    REQUIRE(pairs.size() > 30);
    for (size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs.labels[i] == PairLabel::EdgeNegative);
        CHECK(pairs.gt_normals[i].a.dot(pairs.gt_normals[i].b) > 0.95);
    }
}

TEST_CASE("every emitted pair satisfies its labeled inequality, deterministically") {
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(33);
    const RenderResult render = render_depth(scene, cam);
    const EdgeMap edges = detect_edges(render.normals);
    Rng rng_a(21), rng_b(21);
    const PointPairSet a = sample_edge_pairs(edges, render.normals, 10000, rng_a);
    const PointPairSet b = sample_edge_pairs(edges, render.normals, 10000, rng_b);
    REQUIRE(a.size() > 1000);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.pairs[i].a == b.pairs[i].a);
        CHECK(a.pairs[i].b == b.pairs[i].b);
        const double dot = a.gt_normals[i].a.dot(a.gt_normals[i].b);
        if (a.labels[i] == PairLabel::EdgePositive) CHECK(dot < 0.3);
        else if (a.labels[i] == PairLabel::EdgeNegative) CHECK(dot > 0.95);
        CHECK(a.pairs[i].a != a.pairs[i].b);
    }
}

TEST_CASE("cluster_planes recovers the visible room planes") {
    SceneConfig config;
    config.box_count = {0, 0};
    const CameraIntrinsics cam = default_scene_camera();
    const SyntheticScene scene = generate_scene(2, config);
    const RenderResult render = render_depth(scene, cam);
    const NormalMap normals = compute_normals(render.depth, cam, 3);
    const std::vector<PlaneSegment> segments = cluster_planes(normals, render.depth, cam);

    std::map<int, int> label_counts;
    for (int label : render.labels.data) ++label_counts[label];
    int big_labels = 0;
    for (const auto &[label, count] : label_counts) big_labels += count >= 300;
    CHECK(static_cast<int>(segments.size()) == big_labels);

    // pixel-label agreement within segments
    long agree = 0, total = 0;
    std::set<int> seen;
    for (const PlaneSegment &seg : segments) {
        std::map<int, int> votes;
        for (int idx : seg.pixels) ++votes[render.labels[idx]];
        const auto majority =
            std::max_element(votes.begin(), votes.end(),
                             [](const auto &a, const auto &b) { return a.second < b.second; });
        CHECK(!seen.contains(majority->first)); // distinct physical planes
        seen.insert(majority->first);
        agree += majority->second;
        total += seg.size();
    }
    CHECK(static_cast<double>(agree) / total >= 0.98);
}

TEST_CASE("cluster_planes segments are disjoint") {
    const CameraIntrinsics cam = default_scene_camera();
    const RenderResult render = render_depth(generate_scene(14), cam);
    const NormalMap normals = compute_normals(render.depth, cam, 3);
    const std::vector<PlaneSegment> segments = cluster_planes(normals, render.depth, cam);
    std::set<int> seen;
    for (const PlaneSegment &seg : segments)
        for (int idx : seg.pixels) {
            CHECK(!seen.contains(idx));
            seen.insert(idx);
        }
}

TEST_CASE("uniform-sphere noise normals produce no segments under strict eps") {
    Rng rng(6);
    const int n = 128;
    NormalMap normals(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
            normals.normals.at(r, c) = v.normalized();
            normals.mask.at(r, c) = 1;
        }
    DepthMap depth = constant_map(n, n, 2.0);
    for (double &v : depth.values.data) v += rng.uniform(-0.5, 0.5);
    const CameraIntrinsics cam = default_scene_camera();
    const std::vector<PlaneSegment> segments = cluster_planes(normals, depth, cam, 0.02, 50);
    CHECK(segments.empty());
}

TEST_CASE("two parallel walls at different depths form two segments") {
    const int n = 128;
    const CameraIntrinsics cam = default_scene_camera();
    DepthMap depth(n, n, DepthUnit::Metric);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            depth.values.at(r, c) = c < n / 2 ? 2.0 : 4.0;
            // invalid band between the walls so no window bridges the step
            depth.mask.at(r, c) = (c < n / 2 - 2 || c >= n / 2 + 2) ? 1 : 0;
        }
    const NormalMap normals = compute_normals(depth, cam, 3);
    const std::vector<PlaneSegment> segments = cluster_planes(normals, depth, cam);
    REQUIRE(segments.size() == 2);
    CHECK(std::abs(segments[0].normal.dot(segments[1].normal)) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(segments[0].offset - segments[1].offset) > 0.1);
}

TEST_CASE("coplanar pairs split budget by area and carry unit dots") {
    PlaneSegment big, small;
    big.normal = Eigen::Vector3d(0, 0, -1);
    small.normal = Eigen::Vector3d(0, -1, 0);
    for (int i = 0; i < 300; ++i) big.pixels.push_back(i);
    for (int i = 1000; i < 1100; ++i) small.pixels.push_back(i);
    std::vector<PlaneSegment> segments{big, small};
    Rng rng(30);
    const PointPairSet pairs = sample_coplanar_pairs(segments, 100, rng);
    REQUIRE(pairs.size() == 100);
    int in_big = 0, in_small = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs.labels[i] == PairLabel::Coplanar);
        CHECK(pairs.gt_normals[i].a.dot(pairs.gt_normals[i].b) == 1.0);
        CHECK(pairs.pairs[i].a != pairs.pairs[i].b);
        const bool a_big = pairs.pairs[i].a < 300, b_big = pairs.pairs[i].b < 300;
        CHECK(a_big == b_big); // intra-segment only
        a_big ? ++in_big : ++in_small;
    }
    CHECK(in_big == 75);
    CHECK(in_small == 25);
}

TEST_CASE("single segment with budget 100 gives 100 intra-segment pairs") {
    PlaneSegment seg;
    for (int i = 0; i < 40; ++i) seg.pixels.push_back(i);
    Rng rng(31);
    const PointPairSet pairs = sample_coplanar_pairs(std::vector<PlaneSegment>{seg}, 100, rng);
    CHECK(pairs.size() == 100);
}

TEST_CASE("segments below two pixels give an empty set") {
    PlaneSegment tiny;
    tiny.pixels.push_back(7);
    Rng rng(32);
    const PointPairSet pairs = sample_coplanar_pairs(std::vector<PlaneSegment>{tiny}, 10, rng);
    CHECK(pairs.size() == 0);
}

TEST_CASE("segments_from_mask fits planes per label value") {
    const int n = 32;
    const CameraIntrinsics cam = CameraIntrinsics::from_fov(60.0, n, n);
    DepthMap depth(n, n, DepthUnit::Metric);
    Grid<uint8_t> mask(n, n, 0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            depth.values.at(r, c) = c < n / 2 ? 2.0 : 5.0;
            depth.mask.at(r, c) = 1;
            mask.at(r, c) = c < n / 2 ? 1 : 2;
        }
    const std::vector<PlaneSegment> segments = segments_from_mask(mask, &depth, &cam);
    REQUIRE(segments.size() == 2);
    CHECK(segments[0].size() == n * n / 2);
    CHECK(segments[0].normal.z() == doctest::Approx(-1.0));
    CHECK(segments[0].offset == doctest::Approx(-2.0));
    CHECK(segments[1].offset == doctest::Approx(-5.0));
}

} // TEST_SUITE
