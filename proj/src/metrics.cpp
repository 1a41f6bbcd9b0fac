#include "visent/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "visent/errors.hpp"
#include "visent/scene.hpp"

namespace visent {

double rmse_255(const Clip& pred, const Clip& gt) {
    if (!pred.same_shape(gt)) throw ConfigError("rmse: clip shapes differ");
    double acc = 0.0;
    size_t count = 0;
    for (int f = 0; f < pred.frame_count(); ++f) {
        const auto& pf = pred.frames[static_cast<size_t>(f)];
        const auto& gf = gt.frames[static_cast<size_t>(f)];
        for (size_t i = 0; i < pf.size(); ++i) {
            const double d = 255.0 * (pf[i] - gf[i]);
            acc += d * d;
        }
        count += pf.size();
    }
    return std::sqrt(acc / static_cast<double>(count));
}

namespace {

struct PixelSet {
    std::vector<std::pair<int, int>> pts;  // (y, x) row-major order
};

PixelSet binarize(const Mat& img, double threshold) {
    PixelSet s;
    for (int y = 0; y < img.rows(); ++y)
        for (int x = 0; x < img.cols(); ++x)
            if (img.at(y, x) >= threshold) s.pts.emplace_back(y, x);
    return s;
}

bool within_radius1(const std::pair<int, int>& a, const std::pair<int, int>& b) {
    const int dy = a.first - b.first;
    const int dx = a.second - b.second;
    return dy * dy + dx * dx <= 1;
}

// Kuhn's augmenting-path maximum bipartite matching.
int max_matching(const PixelSet& pred, const PixelSet& gt) {
    const int np = static_cast<int>(pred.pts.size());
    const int ng = static_cast<int>(gt.pts.size());
    std::vector<std::vector<int>> adj(static_cast<size_t>(np));
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j)
            if (within_radius1(pred.pts[static_cast<size_t>(i)], gt.pts[static_cast<size_t>(j)]))
                adj[static_cast<size_t>(i)].push_back(j);

    std::vector<int> match_gt(static_cast<size_t>(ng), -1);
    std::vector<char> used;
    std::function<bool(int)> try_assign = [&](int u) -> bool {
        for (int v : adj[static_cast<size_t>(u)]) {
            if (used[static_cast<size_t>(v)]) continue;
            used[static_cast<size_t>(v)] = 1;
            if (match_gt[static_cast<size_t>(v)] < 0 || try_assign(match_gt[static_cast<size_t>(v)])) {
                match_gt[static_cast<size_t>(v)] = u;
                return true;
            }
        }
        return false;
    };

    int matched = 0;
    for (int u = 0; u < np; ++u) {
        used.assign(static_cast<size_t>(ng), 0);
        if (try_assign(u)) matched += 1;
    }
    return matched;
}

struct PrPoint {
    double precision = 1.0, recall = 1.0;
};

PrPoint pr_at_threshold(const Mat& pred, const Mat& gt, double threshold) {
    const PixelSet p = binarize(pred, threshold);
    const PixelSet g = binarize(gt, 0.5);
    const int m = max_matching(p, g);
    PrPoint out;
    out.precision = p.pts.empty() ? 1.0 : static_cast<double>(m) / static_cast<double>(p.pts.size());
    out.recall = g.pts.empty() ? 1.0 : static_cast<double>(m) / static_cast<double>(g.pts.size());
    return out;
}

double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

EdgeMetrics edge_metrics(const std::vector<EdgePair>& pairs) {
    if (pairs.empty()) throw ConfigError("edge_metrics: empty set");
    constexpr int kThresholds = 99;
    const size_t n = pairs.size();

    std::vector<std::vector<PrPoint>> pr(n, std::vector<PrPoint>(kThresholds));
    for (size_t i = 0; i < n; ++i) {
        if (pr[i].size() != kThresholds) throw InvariantError("edge_metrics: internal");
        if (pairs[i].pred.rows() != pairs[i].gt.rows() || pairs[i].pred.cols() != pairs[i].gt.cols())
            throw ConfigError("edge_metrics: image shapes differ");
        for (int k = 0; k < kThresholds; ++k)
            pr[i][static_cast<size_t>(k)] =
                pr_at_threshold(pairs[i].pred, pairs[i].gt, (k + 1) / 100.0);
    }

    EdgeMetrics out;

    // ODS: one shared threshold maximizing the image-averaged F.
    double best_mean_f = -1.0;
    for (int k = 0; k < kThresholds; ++k) {
        double mean_f = 0.0;
        for (size_t i = 0; i < n; ++i)
            mean_f += f_measure(pr[i][static_cast<size_t>(k)].precision,
                                pr[i][static_cast<size_t>(k)].recall);
        mean_f /= static_cast<double>(n);
        if (mean_f > best_mean_f) best_mean_f = mean_f;
    }
    out.ods = best_mean_f;

    // OIS: per-image best threshold.
    double sum_best = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double best = 0.0;
        for (int k = 0; k < kThresholds; ++k)
            best = std::max(best, f_measure(pr[i][static_cast<size_t>(k)].precision,
                                            pr[i][static_cast<size_t>(k)].recall));
        sum_best += best;
    }
    out.ois = sum_best / static_cast<double>(n);

    // AP over the image-averaged PR curve, sorted by recall, anchored at 0.
    std::vector<std::pair<double, double>> curve;  // (recall, precision)
    for (int k = 0; k < kThresholds; ++k) {
        double mp = 0.0, mr = 0.0;
        for (size_t i = 0; i < n; ++i) {
            mp += pr[i][static_cast<size_t>(k)].precision;
            mr += pr[i][static_cast<size_t>(k)].recall;
        }
        curve.emplace_back(mr / static_cast<double>(n), mp / static_cast<double>(n));
    }
    std::stable_sort(curve.begin(), curve.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    double ap = 0.0;
    double prev_r = 0.0, prev_p = curve.front().second;
    for (const auto& [r, p] : curve) {
        ap += (r - prev_r) * 0.5 * (p + prev_p);
        prev_r = r;
        prev_p = p;
    }
    out.ap = ap;
    return out;
}

EdgeMetrics edge_metrics(const Mat& pred, const Mat& gt) {
    std::vector<EdgePair> pairs(1);
    pairs[0].pred = pred;
    pairs[0].gt = gt;
    return edge_metrics(pairs);
}

Palette seg_palette() {
    Palette p;
    for (const auto& c : kSegPalette) p.colors.push_back({c[0], c[1], c[2]});
    return p;
}

Palette binary_palette() {
    Palette p;
    p.colors.push_back({0.0, 0.0, 0.0});
    p.colors.push_back({1.0, 1.0, 1.0});
    return p;
}

int nearest_class(const Palette& palette, double r, double g, double b) {
    int best = 0;
    double best_d = 1e300;
    for (size_t i = 0; i < palette.colors.size(); ++i) {
        const auto& c = palette.colors[i];
        const double d = (r - c[0]) * (r - c[0]) + (g - c[1]) * (g - c[1]) + (b - c[2]) * (b - c[2]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

SegMetrics segmentation_metrics_labels(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw ConfigError("segmentation metrics: label maps differ in size");
    std::set<int> classes(pred.begin(), pred.end());
    classes.insert(gt.begin(), gt.end());

    double iou_sum = 0.0;
    for (int c : classes) {
        size_t inter = 0, uni = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            const bool in_p = pred[i] == c;
            const bool in_g = gt[i] == c;
            inter += in_p && in_g ? 1 : 0;
            uni += in_p || in_g ? 1 : 0;
        }
        iou_sum += uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    }

    size_t correct = 0;
    for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gt[i] ? 1 : 0;

    SegMetrics out;
    out.miou = iou_sum / static_cast<double>(classes.size());
    out.pacc = static_cast<double>(correct) / static_cast<double>(pred.size());
    return out;
}

SegMetrics segmentation_metrics(const Clip& pred, const Clip& gt, const Palette& palette) {
    if (!pred.same_shape(gt)) throw ConfigError("segmentation metrics: clip shapes differ");
    std::vector<int> pl, gl;
    for (int f = 0; f < pred.frame_count(); ++f)
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x) {
                pl.push_back(nearest_class(palette, pred.at(f, y, x, 0), pred.at(f, y, x, 1),
                                           pred.at(f, y, x, 2)));
                gl.push_back(nearest_class(palette, gt.at(f, y, x, 0), gt.at(f, y, x, 1),
                                           gt.at(f, y, x, 2)));
            }
    return segmentation_metrics_labels(pl, gl);
}

DepthMetrics depth_metrics(const std::vector<double>& pred, const std::vector<double>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw ConfigError("depth metrics: maps differ in size");
    const size_t n = pred.size();
    DepthMetrics out;
    std::vector<double> log_err(n);
    double log_sum = 0.0, log_sq_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double p = std::clamp(pred[i], kDepthClamp, 1.0);
        const double g = std::clamp(gt[i], kDepthClamp, 1.0);
        const double ratio = std::max(p / g, g / p);
        out.delta1 += ratio < 1.25 ? 1.0 : 0.0;
        out.delta2 += ratio < 1.25 * 1.25 ? 1.0 : 0.0;
        out.delta3 += ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0;
        out.abs_rel += std::abs(p - g) / g;
        out.sq_rel += (p - g) * (p - g) / g;
        const double e = std::log(p) - std::log(g);
        log_err[i] = e;
        log_sum += e;
        log_sq_sum += e * e;
    }
    const double dn = static_cast<double>(n);
    out.delta1 /= dn;
    out.delta2 /= dn;
    out.delta3 /= dn;
    out.abs_rel /= dn;
    out.sq_rel /= dn;
    out.rmse_log = std::sqrt(log_sq_sum / dn);
    // two-pass variance: exact zero for a global scaling, no cancellation
    const double mean_e = log_sum / dn;
    double var = 0.0;
    for (double e : log_err) var += (e - mean_e) * (e - mean_e);
    out.silog = 100.0 * std::sqrt(var / dn);
    return out;
}

NormalMetrics normal_metrics(const Mat& pred, const Mat& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3)
        throw ConfigError("normal metrics: need matching n x 3 vector maps");
    NormalMetrics out;
    std::vector<double> angles;
    for (int i = 0; i < pred.rows(); ++i) {
        const double* p = pred.row(i);
        const double* g = gt.row(i);
        const double np = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        const double ng = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        if (np < 1e-12 || ng < 1e-12) {
            out.excluded += 1;
            continue;
        }
        double dot = (p[0] * g[0] + p[1] * g[1] + p[2] * g[2]) / (np * ng);
        dot = std::clamp(dot, -1.0, 1.0);
        angles.push_back(std::acos(dot) * 180.0 / 3.14159265358979323846);
    }
    if (angles.empty()) throw ConfigError("normal metrics: no valid pixels");

    double sum = 0.0;
    for (double a : angles) {
        sum += a;
        out.pct5 += a < 5.0 ? 1.0 : 0.0;
        out.pct11_25 += a < 11.25 ? 1.0 : 0.0;
        out.pct30 += a < 30.0 ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(angles.size());
    out.mean_deg = sum / n;
    out.pct5 /= n;
    out.pct11_25 /= n;
    out.pct30 /= n;

    std::sort(angles.begin(), angles.end());
    const size_t mid = angles.size() / 2;
    out.median_deg = angles.size() % 2 == 1 ? angles[mid] : 0.5 * (angles[mid - 1] + angles[mid]);
    return out;
}

double style_proxy(const Clip& pred, const Clip& ref_style) {
    constexpr int kBins = 8;
    std::array<std::array<double, kBins>, 3> hp{}, hr{};
    auto accumulate = [&](const Clip& clip, std::array<std::array<double, kBins>, 3>& h) {
        size_t count = 0;
        for (const auto& fr : clip.frames) {
            for (size_t i = 0; i + 2 < fr.size(); i += 3) {
                for (int c = 0; c < 3; ++c) {
                    const int bin = std::min(kBins - 1,
                                             static_cast<int>(std::clamp(fr[i + static_cast<size_t>(c)],
                                                                         0.0, 1.0) * kBins));
                    h[static_cast<size_t>(c)][static_cast<size_t>(bin)] += 1.0;
                }
                count += 1;
            }
        }
        for (auto& ch : h)
            for (double& v : ch) v /= static_cast<double>(count);
    };
    accumulate(pred, hp);
    accumulate(ref_style, hr);

    double dist = 0.0;
    for (int c = 0; c < 3; ++c) {
        double tv = 0.0;
        for (int b = 0; b < kBins; ++b)
            tv += std::abs(hp[static_cast<size_t>(c)][static_cast<size_t>(b)] -
                           hr[static_cast<size_t>(c)][static_cast<size_t>(b)]);
        dist += 0.5 * tv;
    }
    return dist / 3.0;
}

void MetricReport::set(const std::string& name, double v) {
    for (auto& [n, old] : values)
        if (n == name) {
            old = v;
            return;
        }
    values.emplace_back(name, v);
}

double MetricReport::get(const std::string& name) const {
    for (const auto& [n, v] : values)
        if (n == name) return v;
    throw ConfigError("metric not in report: " + name);
}

bool MetricReport::has(const std::string& name) const {
    for (const auto& [n, v] : values)
        if (n == name) return true;
    return false;
}

void MetricReport::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (const auto& [name, v] : values) {
        if (!std::isfinite(v)) throw InvariantError("metric " + name + " is not finite");
        if (name == "rmse" && !(v >= 0.0 && v <= 255.0))
            throw InvariantError("rmse out of [0,255]");
        if ((name == "ods" || name == "ois" || name == "ap" || name == "miou" || name == "pacc" ||
             name == "delta1" || name == "delta2" || name == "delta3" || name == "pct5" ||
             name == "pct11_25" || name == "pct30" || name == "style") &&
            !in01(v))
            throw InvariantError("metric " + name + " out of [0,1]");
        if ((name == "abs_rel" || name == "sq_rel" || name == "rmse_log" || name == "silog") &&
            v < 0.0)
            throw InvariantError("metric " + name + " negative");
        if ((name == "mean_deg" || name == "median_deg") && !(v >= 0.0 && v <= 180.0))
            throw InvariantError("metric " + name + " out of [0,180]");
    }
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task;
    j["context"] = context;
    j["shots"] = shots;
    j["run_id"] = run_id;
    nlohmann::ordered_json vals;
    for (const auto& [n, v] : values) vals[n] = v;
    j["values"] = vals;
    return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
    const auto j = nlohmann::ordered_json::parse(text);
    MetricReport r;
    r.task = j.at("task").get<std::string>();
    r.context = j.at("context").get<std::string>();
    r.shots = j.at("shots").get<int>();
    r.run_id = j.value("run_id", "");
    for (const auto& [k, v] : j.at("values").items()) r.values.emplace_back(k, v.get<double>());
    return r;
}

std::string report_table(const std::vector<MetricReport>& reports) {
    std::vector<std::string> columns = {"task", "context", "shots"};
    for (const auto& r : reports)
        for (const auto& [n, v] : r.values)
            if (std::find(columns.begin(), columns.end(), n) == columns.end()) columns.push_back(n);

    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(4);
        os << std::fixed << v;
        return os.str();
    };

    std::vector<std::vector<std::string>> rows;
    rows.push_back(columns);
    for (const auto& r : reports) {
        std::vector<std::string> row = {r.task, r.context, std::to_string(r.shots)};
        for (size_t c = 3; c < columns.size(); ++c)
            row.push_back(r.has(columns[c]) ? fmt(r.get(columns[c])) : "-");
        rows.push_back(row);
    }

    std::vector<size_t> widths(columns.size(), 0);
    for (const auto& row : rows)
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

    std::ostringstream os;
    for (size_t ri = 0; ri < rows.size(); ++ri) {
        for (size_t c = 0; c < rows[ri].size(); ++c) {
            os << rows[ri][c];
            if (c + 1 < rows[ri].size())
                os << std::string(widths[c] - rows[ri][c].size() + 2, ' ');
        }
        os << '\n';
        if (ri == 0) {
            size_t total = 0;
            for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
            os << std::string(total, '-') << '\n';
        }
    }
    return os.str();
}

}  // namespace visent
