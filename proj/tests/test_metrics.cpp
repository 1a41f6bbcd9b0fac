#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "visent/metrics.hpp"
#include "visent/rng.hpp"

#include "metric_oracles.hpp"

using namespace visent;


namespace {

Clip random_image(RngStream& rng, int h = 8, int w = 8) {
    Clip c = Clip::image(h, w);
    for (double& v : c.frames[0]) v = rng.uniform();
    return c;
}

Mat sparse_binary(RngStream& rng, int h, int w, double density) {
    Mat m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = rng.uniform() < density ? 1.0 : 0.0;
    return m;
}

Mat random_prob(RngStream& rng, int h, int w) {
    Mat m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = rng.uniform();
    return m;
}

}  // namespace

TEST_CASE("rmse: hand cases") {
    Clip a = Clip::image(16, 16), b = Clip::image(16, 16);
    a.fill(0.5, 0.5, 0.5);
    b.fill(0.5, 0.5, 0.5);
    CHECK(rmse_255(a, b) == 0.0);

    for (double& v : b.frames[0]) v += 10.0 / 255.0;
    CHECK(rmse_255(a, b) == doctest::Approx(10.0).epsilon(1e-12));

    Clip c = Clip::image(16, 16), d = Clip::image(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const double v = (x + y) % 2 == 0 ? 1.0 : 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                c.at(0, y, x, ch) = v;
                d.at(0, y, x, ch) = 1.0 - v;
            }
        }
    CHECK(rmse_255(c, d) == doctest::Approx(255.0).epsilon(1e-12));
}

TEST_CASE("rmse: shape mismatch rejected and oracle agreement") {
    RngStream rng(5);
    Clip a = random_image(rng), b = random_image(rng);
    CHECK(rmse_255(a, b) == doctest::Approx(oracle::rmse(a, b)).epsilon(1e-12));
    Clip c = Clip::image(4, 8);
    CHECK_THROWS_AS(rmse_255(a, c), ConfigError);
}

TEST_CASE("edge: perfect prediction scores one") {
    RngStream rng(31);
    const Mat gt = sparse_binary(rng, 8, 8, 0.15);
    const EdgeMetrics m = edge_metrics(gt, gt);
    CHECK(m.ods == doctest::Approx(1.0));
    CHECK(m.ois == doctest::Approx(1.0));
    CHECK(m.ap == doctest::Approx(1.0));
}

TEST_CASE("edge: far-separated prediction scores zero") {
    // disjoint sets more than one pixel apart cannot match
    Mat gt(8, 8), pred(8, 8);
    gt.at(0, 0) = 1.0;
    gt.at(0, 2) = 1.0;
    pred.at(6, 6) = 1.0;
    pred.at(4, 7) = 1.0;
    const EdgeMetrics m = edge_metrics(pred, gt);
    CHECK(m.ods == 0.0);
    CHECK(m.ois == 0.0);
    CHECK(m.ap == 0.0);
}

TEST_CASE("edge: empty-empty convention") {
    Mat zero(8, 8);
    const EdgeMetrics m = edge_metrics(zero, zero);
    CHECK(m.ods == doctest::Approx(1.0));
}

TEST_CASE("edge: matches the exhaustive oracle on random sets") {
    RngStream rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<EdgePair> pairs;
        const int images = 1 + rng.index(3);
        for (int i = 0; i < images; ++i) {
            EdgePair p;
            p.gt = sparse_binary(rng, 8, 8, 0.12);
            p.pred = random_prob(rng, 8, 8);
            // sparsify predictions so brute-force matching stays tractable
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    if (p.pred.at(y, x) < 0.75) p.pred.at(y, x) = 0.0;
            pairs.push_back(std::move(p));
        }
        const EdgeMetrics got = edge_metrics(pairs);
        const EdgeMetrics want = oracle::edge(pairs);
        CHECK(got.ods == doctest::Approx(want.ods).epsilon(1e-6));
        CHECK(got.ois == doctest::Approx(want.ois).epsilon(1e-6));
        CHECK(got.ap == doctest::Approx(want.ap).epsilon(1e-6));
    }
}

TEST_CASE("edge: ods never exceeds ois") {
    RngStream rng(123);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<EdgePair> pairs;
        for (int i = 0; i < 3; ++i) {
            EdgePair p;
            p.gt = sparse_binary(rng, 8, 8, 0.15);
            p.pred = random_prob(rng, 8, 8);
            pairs.push_back(std::move(p));
        }
        const EdgeMetrics m = edge_metrics(pairs);
        CHECK(m.ods <= m.ois + 1e-12);
    }
}

TEST_CASE("segmentation: spec hand case") {
    const SegMetrics m = segmentation_metrics_labels({0, 1, 1, 1}, {0, 0, 1, 1});
    CHECK(m.pacc == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.miou == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("segmentation: perfect and degenerate cases") {
    const SegMetrics perfect = segmentation_metrics_labels({2, 0, 1}, {2, 0, 1});
    CHECK(perfect.miou == 1.0);
    CHECK(perfect.pacc == 1.0);
    const SegMetrics half = segmentation_metrics_labels({0, 0, 0, 0}, {0, 0, 1, 1});
    CHECK(half.pacc == 0.5);
}

TEST_CASE("segmentation: color clips run through nearest-palette assignment") {
    Clip gt = Clip::image(16, 16);
    Clip pred = Clip::image(16, 16);
    const Palette pal = seg_palette();
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const int cls = x < 8 ? 1 : 2;
            for (int c = 0; c < 3; ++c) {
                gt.at(0, y, x, c) = pal.colors[static_cast<size_t>(cls)][static_cast<size_t>(c)];
                // noisy prediction still snaps to the right color
                pred.at(0, y, x, c) =
                    std::clamp(pal.colors[static_cast<size_t>(cls)][static_cast<size_t>(c)] +
                                   (x % 2 ? 0.12 : -0.12),
                               0.0, 1.0);
            }
        }
    const SegMetrics m = segmentation_metrics(pred, gt, pal);
    CHECK(m.pacc == doctest::Approx(1.0));
    CHECK(m.miou == doctest::Approx(1.0));
}

TEST_CASE("segmentation: oracle agreement on random labels") {
    RngStream rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> pred(64), gt(64);
        for (auto& v : pred) v = rng.index(4);
        for (auto& v : gt) v = rng.index(4);
        const SegMetrics got = segmentation_metrics_labels(pred, gt);
        const SegMetrics want = oracle::seg(pred, gt);
        CHECK(got.miou == doctest::Approx(want.miou).epsilon(1e-9));
        CHECK(got.pacc == doctest::Approx(want.pacc).epsilon(1e-9));
    }
}

TEST_CASE("depth: spec hand cases") {
    std::vector<double> gt = {0.2, 0.4, 0.6, 0.7};
    const DepthMetrics perfect = depth_metrics(gt, gt);
    CHECK(perfect.delta1 == 1.0);
    CHECK(perfect.abs_rel == 0.0);
    CHECK(perfect.silog == 0.0);

    std::vector<double> pred;
    for (double g : gt) pred.push_back(1.3 * g);
    const DepthMetrics m = depth_metrics(pred, gt);
    CHECK(m.delta1 == 0.0);
    CHECK(m.delta2 == 1.0);
    CHECK(m.delta3 == 1.0);
    CHECK(m.abs_rel == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(m.silog <= 1e-9);
}

TEST_CASE("depth: deltas are monotone and oracle agrees") {
    RngStream rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> pred(16), gt(16);
        for (auto& v : pred) v = rng.uniform(0.0, 1.2);
        for (auto& v : gt) v = rng.uniform(0.0, 1.2);
        const DepthMetrics got = depth_metrics(pred, gt);
        const DepthMetrics want = oracle::depth(pred, gt);
        CHECK(got.delta1 <= got.delta2);
        CHECK(got.delta2 <= got.delta3);
        CHECK(got.delta1 == doctest::Approx(want.delta1).epsilon(1e-9));
        CHECK(got.abs_rel == doctest::Approx(want.abs_rel).epsilon(1e-9));
        CHECK(got.sq_rel == doctest::Approx(want.sq_rel).epsilon(1e-9));
        CHECK(got.rmse_log == doctest::Approx(want.rmse_log).epsilon(1e-9));
        CHECK(got.silog == doctest::Approx(want.silog).epsilon(1e-9));
    }
}

TEST_CASE("depth: silog vanishes exactly for global scalings") {
    RngStream rng(55);
    std::vector<double> gt(32), pred(32);
    for (auto& v : gt) v = rng.uniform(0.05, 0.7);
    for (size_t i = 0; i < gt.size(); ++i) pred[i] = 1.21 * gt[i];
    CHECK(depth_metrics(pred, gt).silog <= 1e-9);
    // and not for non-proportional pairs
    pred[3] = 0.9 * gt[3];
    CHECK(depth_metrics(pred, gt).silog > 1e-6);
}

TEST_CASE("normals: spec hand cases") {
    RngStream rng(8);
    Mat gt(64, 3), same(64, 3), opposite(64, 3), rotated(64, 3);
    const double angle = 10.0 * M_PI / 180.0;
    for (int i = 0; i < 64; ++i) {
        // unit vectors in the xy-plane, rotated about the z axis
        const double phi = rng.uniform(0.0, 2 * M_PI);
        gt.at(i, 0) = std::cos(phi);
        gt.at(i, 1) = std::sin(phi);
        gt.at(i, 2) = 0.0;
        same.at(i, 0) = gt.at(i, 0);
        same.at(i, 1) = gt.at(i, 1);
        same.at(i, 2) = 0.0;
        opposite.at(i, 0) = -gt.at(i, 0);
        opposite.at(i, 1) = -gt.at(i, 1);
        opposite.at(i, 2) = 0.0;
        rotated.at(i, 0) = std::cos(phi + angle);
        rotated.at(i, 1) = std::sin(phi + angle);
        rotated.at(i, 2) = 0.0;
    }
    const NormalMetrics eq = normal_metrics(same, gt);
    CHECK(eq.mean_deg == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(eq.pct5 == 1.0);
    CHECK(eq.pct30 == 1.0);

    const NormalMetrics opp = normal_metrics(opposite, gt);
    CHECK(opp.mean_deg == doctest::Approx(180.0).epsilon(1e-9));
    CHECK(opp.pct30 == 0.0);

    const NormalMetrics rot = normal_metrics(rotated, gt);
    CHECK(rot.mean_deg == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(rot.median_deg == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(rot.pct5 == 0.0);
    CHECK(rot.pct11_25 == 1.0);
}

TEST_CASE("normals: zero vectors are excluded and counted") {
    Mat gt(3, 3), pred(3, 3);
    for (int i = 0; i < 3; ++i) gt.at(i, 0) = 1.0;
    pred.at(0, 0) = 1.0;
    pred.at(1, 0) = 0.0;  // zero vector
    pred.at(2, 0) = 2.0;  // renormalized
    const NormalMetrics m = normal_metrics(pred, gt);
    CHECK(m.excluded == 1);
    CHECK(m.mean_deg == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("normals: oracle agreement on random vectors") {
    RngStream rng(63);
    for (int trial = 0; trial < 100; ++trial) {
        Mat pred(12, 3), gt(12, 3);
        for (int i = 0; i < 12; ++i)
            for (int c = 0; c < 3; ++c) {
                pred.at(i, c) = rng.normal();
                gt.at(i, c) = rng.normal();
            }
        const NormalMetrics got = normal_metrics(pred, gt);
        const NormalMetrics want = oracle::normals(pred, gt);
        CHECK(got.mean_deg == doctest::Approx(want.mean_deg).epsilon(1e-9));
        CHECK(got.median_deg == doctest::Approx(want.median_deg).epsilon(1e-9));
        CHECK(got.pct11_25 == doctest::Approx(want.pct11_25).epsilon(1e-9));
    }
}

TEST_CASE("style proxy: hand cases") {
    RngStream rng(2);
    Clip a = random_image(rng, 16, 16);
    CHECK(style_proxy(a, a) == 0.0);

    // pixel permutation keeps the histogram
    Clip b = a;
    std::reverse(b.frames[0].begin(), b.frames[0].end());
    // reversing rgb triples scrambles channels; permute whole pixels instead
    b = a;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) b.at(0, y, x, c) = a.at(0, 15 - y, 15 - x, c);
    CHECK(style_proxy(a, b) == doctest::Approx(0.0).epsilon(1e-12));

    Clip dark = Clip::image(8, 8), bright = Clip::image(8, 8);
    dark.fill(0.01, 0.01, 0.01);
    bright.fill(0.99, 0.99, 0.99);
    CHECK(style_proxy(dark, bright) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("style proxy: oracle agreement") {
    RngStream rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        Clip a = random_image(rng), b = random_image(rng);
        CHECK(style_proxy(a, b) == doctest::Approx(oracle::style(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("metric report: bounds validation and serialization") {
    MetricReport r;
    r.task = "depth_map";
    r.context = "II";
    r.shots = 4;
    r.set("rmse", 12.25);
    r.set("delta1", 0.8);
    r.validate();

    const MetricReport back = MetricReport::from_json(r.to_json());
    CHECK(back.get("rmse") == 12.25);
    CHECK(back.get("delta1") == 0.8);
    CHECK(back.task == "depth_map");

    MetricReport bad = r;
    bad.set("delta1", 1.5);
    CHECK_THROWS_AS(bad.validate(), InvariantError);
    MetricReport inf_r = r;
    inf_r.set("rmse", std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(inf_r.validate(), InvariantError);

    const std::string table = report_table({r});
    CHECK(table.find("depth_map") != std::string::npos);
    CHECK(table.find("rmse") != std::string::npos);
}
