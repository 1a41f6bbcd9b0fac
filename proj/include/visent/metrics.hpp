#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "visent/clip.hpp"
#include "visent/tensor.hpp"

namespace visent {

// Pixel-space RMSE on the 0-255 scale over all frames, pixels and channels.
double rmse_255(const Clip& pred, const Clip& gt);

struct EdgeMetrics {
    double ods = 0.0, ois = 0.0, ap = 0.0;
};

struct EdgePair {
    Mat pred;  // probabilities in [0,1]
    Mat gt;    // binary
};

// Boundary detection scores over a set of images. 99 thresholds k/100;
// correspondences are a maximum bipartite matching between predicted and
// ground-truth pixels within Euclidean radius 1. Per image and threshold
// F = 2PR/(P+R); empty prediction gives P=1, empty ground truth R=1.
// ODS maximizes the image-averaged F over one shared threshold, OIS averages
// the per-image best F, AP is the trapezoidal area under the image-averaged
// PR curve sorted by recall (anchored at recall 0).
EdgeMetrics edge_metrics(const std::vector<EdgePair>& pairs);
EdgeMetrics edge_metrics(const Mat& pred, const Mat& gt);

struct SegMetrics {
    double miou = 0.0, pacc = 0.0;
};

struct Palette {
    std::vector<std::array<double, 3>> colors;  // index = class id
};

Palette seg_palette();     // background + the six object classes
Palette binary_palette();  // black / white

int nearest_class(const Palette& palette, double r, double g, double b);

// IoU per class present in gt or pred, averaged; pAcc = correct / total.
SegMetrics segmentation_metrics_labels(const std::vector<int>& pred, const std::vector<int>& gt);
// Continuous pixels are assigned to the nearest palette color first.
SegMetrics segmentation_metrics(const Clip& pred, const Clip& gt, const Palette& palette);

struct DepthMetrics {
    double delta1 = 0.0, delta2 = 0.0, delta3 = 0.0;
    double abs_rel = 0.0, sq_rel = 0.0, rmse_log = 0.0, silog = 0.0;
};

// Values are clamped to [1e-3, 1] before evaluation so logs stay finite.
DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt);

struct NormalMetrics {
    double mean_deg = 0.0, median_deg = 0.0;
    double pct5 = 0.0, pct11_25 = 0.0, pct30 = 0.0;
    int excluded = 0;  // zero-norm pixels dropped after renormalization
};

// Rows are 3-vectors; renormalized, zero vectors excluded and counted.
NormalMetrics normal_metrics(const Mat& pred, const Mat& gt);

// Total-variation distance between 8-bin-per-channel color histograms,
// averaged over channels. 0 for identical histograms, 1 for disjoint ones.
double style_proxy(const Clip& pred, const Clip& ref_style);

inline constexpr double kDepthClamp = 1e-3;

struct MetricReport {
    std::string task;
    std::string context;
    int shots = 4;
    std::string run_id;
    std::vector<std::pair<std::string, double>> values;

    void set(const std::string& name, double v);
    double get(const std::string& name) const;
    bool has(const std::string& name) const;
    // Finiteness plus the documented bounds per metric name.
    void validate() const;

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
};

// Aligned plain-text table, one report per row.
std::string report_table(const std::vector<MetricReport>& reports);

}  // namespace visent
