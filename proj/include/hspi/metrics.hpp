#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hspi/tensor.hpp"

namespace hspi {

struct ConfusionCounts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
    long long total() const { return tp + tn + fp + fn; }
};

struct MetricValue {
    double value = 0.0;
    bool degenerate = false;  // a zero-denominator convention was applied
};

inline Tensor binarize(const Tensor& saliency, double threshold) {
    Tensor out = saliency;
    for (float& v : out.data) v = double(v) >= threshold ? 1.0f : 0.0f;
    return out;
}

inline ConfusionCounts confusion(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("confusion: shape mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred.data[i] >= 0.5f, g = gt.data[i] >= 0.5f;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// F1 = 2TP / (FP + 2TP + FN); PPV = TP / (TP + FP); SP = TN / (TN + FP).
// Zero denominators take the pessimistic/neutral conventions: PPV 0, SP 1,
// F1 0, each flagged degenerate.
inline MetricValue f1_score(const ConfusionCounts& c) {
    double den = double(c.fp + 2 * c.tp + c.fn);
    if (den == 0.0) return {0.0, true};
    return {2.0 * double(c.tp) / den, false};
}

inline MetricValue ppv_score(const ConfusionCounts& c) {
    double den = double(c.tp + c.fp);
    if (den == 0.0) return {0.0, true};
    return {double(c.tp) / den, false};
}

inline MetricValue sp_score(const ConfusionCounts& c) {
    double den = double(c.tn + c.fp);
    if (den == 0.0) return {1.0, true};
    return {double(c.tn) / den, false};
}

// Boundary pixel: positive with at least one non-positive 4-neighbor, the
// image border counting as non-positive.
inline std::vector<std::pair<int, int>> boundary_points(const Tensor& mask) {
    if (mask.shape.size() != 2) throw ShapeError("boundary_points: need HxW map");
    int h = mask.dim(0), w = mask.dim(1);
    auto pos = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w && mask(y, x) >= 0.5f;
    };
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (pos(y, x) &&
                (!pos(y - 1, x) || !pos(y + 1, x) || !pos(y, x - 1) || !pos(y, x + 1)))
                pts.emplace_back(y, x);
    return pts;
}

namespace detail {

// Felzenszwalb-Huttenlocher 1-d squared distance transform.
inline void dt1d(const std::vector<double>& f, std::vector<double>& out,
                 std::vector<int>& v, std::vector<double>& z) {
    int n = int(f.size());
    v.assign(std::size_t(n), 0);
    z.assign(std::size_t(n) + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            int p = v[std::size_t(k)];
            s = ((f[std::size_t(q)] + double(q) * q) - (f[std::size_t(p)] + double(p) * p)) /
                (2.0 * (q - p));
            if (s <= z[std::size_t(k)]) { --k; continue; }
            break;
        }
        ++k;
        v[std::size_t(k)] = q;
        z[std::size_t(k)] = s;
        z[std::size_t(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[std::size_t(k) + 1] < double(q)) ++k;
        int p = v[std::size_t(k)];
        out[std::size_t(q)] = double(q - p) * (q - p) + f[std::size_t(p)];
    }
}

// Exact squared Euclidean distance to the nearest seed point, whole image.
// Unseeded cells start at a large finite value rather than infinity: the
// envelope arithmetic stays NaN-free and those parabolas can never win.
inline std::vector<double> distance_transform(int h, int w,
                                              const std::vector<std::pair<int, int>>& seeds) {
    constexpr double inf = 1e18;
    std::vector<double> d(std::size_t(h) * w, inf);
    for (auto [y, x] : seeds) d[std::size_t(y) * w + x] = 0.0;

    std::vector<double> col(static_cast<std::size_t>(h)), colout(static_cast<std::size_t>(h));
    std::vector<int> v;
    std::vector<double> z;
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[std::size_t(y)] = d[std::size_t(y) * w + x];
        dt1d(col, colout, v, z);
        for (int y = 0; y < h; ++y) d[std::size_t(y) * w + x] = colout[std::size_t(y)];
    }
    std::vector<double> row(static_cast<std::size_t>(w)), rowout(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[std::size_t(x)] = d[std::size_t(y) * w + x];
        dt1d(row, rowout, v, z);
        for (int x = 0; x < w; ++x) d[std::size_t(y) * w + x] = rowout[std::size_t(x)];
    }
    return d;
}

}  // namespace detail

// Average surface distance, one-directional: mean over prediction boundary
// points of the Euclidean distance to the nearest ground-truth boundary
// point. An empty prediction boundary scores the image diagonal (maximal
// penalty) and is flagged.
inline MetricValue asd(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("asd: shape mismatch");
    auto gt_pts = boundary_points(gt);
    if (gt_pts.empty()) throw Error("asd: ground truth has no boundary points");
    auto pred_pts = boundary_points(pred);
    int h = pred.dim(0), w = pred.dim(1);
    if (pred_pts.empty())
        return {std::sqrt(double(h - 1) * (h - 1) + double(w - 1) * (w - 1)), true};

    std::vector<double> d2 = detail::distance_transform(h, w, gt_pts);
    double acc = 0.0;
    for (auto [y, x] : pred_pts) acc += std::sqrt(d2[std::size_t(y) * w + x]);
    return {acc / double(pred_pts.size()), false};
}

// Fraction of total saliency mass inside the ground-truth foreground.
inline MetricValue proportion(const Tensor& saliency, const Tensor& gt) {
    if (!saliency.same_shape(gt)) throw ShapeError("proportion: shape mismatch");
    double inside = 0.0, total = 0.0;
    for (std::size_t i = 0; i < saliency.size(); ++i) {
        double v = double(saliency.data[i]);
        total += v;
        if (gt.data[i] >= 0.5f) inside += v;
    }
    if (total <= 0.0) return {0.0, true};
    return {inside / total, false};
}

inline std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int k = 1; k <= 19; ++k) t.push_back(0.05 * k);
    return t;
}

struct SweepResult {
    double best_threshold = 0.0;
    double best_mean_f1 = 0.0;
    std::vector<double> mean_f1;  // parallel to the threshold grid
};

// Mean F1 over the set at each threshold; returns the argmax, lowest
// threshold on ties.
inline SweepResult threshold_sweep(const std::vector<Tensor>& maps,
                                   const std::vector<Tensor>& gts,
                                   const std::vector<double>& thresholds = default_thresholds()) {
    if (maps.empty() || maps.size() != gts.size())
        throw ConfigError("threshold_sweep: need matching nonempty map/gt sets");
    SweepResult out;
    out.best_mean_f1 = -1.0;
    for (double t : thresholds) {
        double acc = 0.0;
        for (std::size_t i = 0; i < maps.size(); ++i)
            acc += f1_score(confusion(binarize(maps[i], t), gts[i])).value;
        double mean = acc / double(maps.size());
        out.mean_f1.push_back(mean);
        if (mean > out.best_mean_f1) {
            out.best_mean_f1 = mean;
            out.best_threshold = t;
        }
    }
    return out;
}

}  // namespace hspi
