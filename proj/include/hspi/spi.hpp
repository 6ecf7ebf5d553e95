#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hspi/classifier.hpp"
#include "hspi/tensor.hpp"

namespace hspi {

// One learnable mask vector: an H_i x W_i grid of retention weights in [0,1].
// 0 shields the patch completely, 1 retains it.
template <typename T>
struct MaskVectorT {
    GridT<T> grid;
    int size_index = 1;   // i
    int stage_index = 1;  // j

    MaskVectorT() = default;
    MaskVectorT(int rows, int cols, T zeta, int i = 1, int j = 1)
        : grid(rows, cols, zeta), size_index(i), stage_index(j) {}
};

using MaskVector = MaskVectorT<float>;

struct CpfConfig {
    double alpha = 5e-3;         // similarity-loss eligibility threshold
    double beta = 0.08;          // mask-loss eligibility threshold
    double lambda = 1.0;         // balance factor on the mask loss
    double learning_rate = 1e-2;
    int total_epochs = 10000;
    int check_every = 50;
    double zeta = 0.5;           // initial mask value

    void validate() const {
        if (alpha <= 0 || beta <= 0 || learning_rate <= 0)
            throw ConfigError("cpf: alpha, beta and learning rate must be positive");
        if (lambda < 0) throw ConfigError("cpf: lambda must be nonnegative");
        if (total_epochs < 1 || check_every < 1)
            throw ConfigError("cpf: epochs and check stride must be at least 1");
        if (zeta < 0 || zeta > 1) throw ConfigError("cpf: zeta must lie in [0,1]");
    }
};

struct CpfRecord {
    int epoch = 0;
    double similarity = 0.0;  // L_s
    double mask = 0.0;        // L_m
    double peak_gap = 0.0;    // D_n
};

template <typename T>
struct CpfReportT {
    std::vector<CpfRecord> records;
    int selected_epoch = 0;
    bool eligible_found = false;  // whether any checked epoch met both thresholds
    GridT<T> trained;             // mask snapshot at the selected epoch
    bool valid = true;            // false when training aborted on non-finite loss
    std::string abort_reason;
};

using CpfReport = CpfReportT<float>;

// ||f(X) - f(mask * X)||_2^2 over the full logit vector.
template <typename T>
double similarity_loss(const ClassifierT<T>& model, const TensorT<T>& image,
                       const TensorT<T>& mask_full, ForwardCtxT<T>& ctx) {
    TensorT<T> base = forward_logits(model, image, ctx);
    TensorT<T> masked_logits = forward_logits(model, apply_mask(image, mask_full), ctx);
    if (!base.all_finite() || !masked_logits.all_finite())
        throw NumericError("similarity_loss: non-finite logits");
    double acc = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        double d = double(base.data[i]) - double(masked_logits.data[i]);
        acc += d * d;
    }
    return acc;
}

template <typename T>
double similarity_loss(const ClassifierT<T>& model, const TensorT<T>& image,
                       const TensorT<T>& mask_full) {
    ForwardCtxT<T> ctx;
    return similarity_loss(model, image, mask_full, ctx);
}

// Mean absolute mask value, in [0,1] for a clamped mask.
template <typename T>
double mask_loss(const GridT<T>& m) {
    double acc = 0.0;
    for (T v : m.v) acc += std::abs(double(v));
    return acc / double(m.size());
}

// Stage input together with its cached reference logits; f and the stage
// image are fixed while the mask trains, so f(X) is computed once.
template <typename T>
struct StageInputT {
    TensorT<T> image;        // X_(i,j)
    TensorT<T> base_logits;  // f(X_(i,j))
};

using StageInput = StageInputT<float>;

template <typename T>
StageInputT<T> make_stage_input(const ClassifierT<T>& model, TensorT<T> image,
                                ForwardCtxT<T>& ctx) {
    StageInputT<T> s;
    s.base_logits = forward_logits(model, image, ctx);
    s.image = std::move(image);
    return s;
}

struct ConsistencyValue {
    double total = 0.0;       // L_c
    double similarity = 0.0;  // L_s component
    double mask = 0.0;        // L_m component
};

// L_c = L_s(X, G_B(omega * M)) + lambda * L_m(M), with the gradient w.r.t. M
// when `grad` is non-null. Cells with omega == 0 receive similarity gradient
// exactly zero; only the mask-loss term reaches them.
template <typename T>
ConsistencyValue consistency_loss(const ClassifierT<T>& model, const StageInputT<T>& stage,
                                  const GridT<T>& omega_prev, const GridT<T>& mask,
                                  double lambda, ForwardCtxT<T>& ctx,
                                  GridT<T>* grad = nullptr) {
    if (!omega_prev.same_shape(mask)) throw ShapeError("consistency_loss: grid shape mismatch");
    int h = stage.image.dim(0), w = stage.image.dim(1);

    GridT<T> prod = hadamard(omega_prev, mask);
    TensorT<T> mask_full = upsample_bilinear(prod, h, w);
    TensorT<T> masked = apply_mask(stage.image, mask_full);
    TensorT<T> logits = forward_logits(model, masked, ctx);
    if (!logits.all_finite()) throw NumericError("consistency_loss: non-finite logits");

    ConsistencyValue out;
    TensorT<T> upstream({int(logits.size())});
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double d = double(logits.data[i]) - double(stage.base_logits.data[i]);
        out.similarity += d * d;
        upstream.data[i] = T(2.0 * d);
    }
    out.mask = mask_loss(mask);
    out.total = out.similarity + lambda * out.mask;

    if (grad) {
        TensorT<T> dimage;
        backward(model, ctx, upstream, &dimage, static_cast<ParamGradsT<T>*>(nullptr));
        // adjoint of apply_mask w.r.t. the mask plane
        TensorT<T> dmask_full({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int c = 0; c < 3; ++c)
                    acc += double(dimage(y, x, c)) * double(stage.image(y, x, c));
                dmask_full(y, x) = T(acc);
            }
        GridT<T> dprod = upsample_bilinear_backward<T>(mask.rows, mask.cols, dmask_full);
        *grad = GridT<T>(mask.rows, mask.cols);
        double inv_cells = lambda / double(mask.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            double sign = mask.v[i] > T(0) ? 1.0 : (mask.v[i] < T(0) ? -1.0 : 0.0);
            grad->v[i] = T(double(omega_prev.v[i]) * double(dprod.v[i]) + inv_cells * sign);
        }
    }
    return out;
}

// Gap between the largest and second-largest mask entries over active
// (omega == 1) cells. Fewer than two active cells means no gap.
template <typename T>
double peak_gap(const GridT<T>& mask, const GridT<T>& active) {
    if (!mask.same_shape(active)) throw ShapeError("peak_gap: grid shape mismatch");
    double best = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    int count = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (active.v[i] == T(0)) continue;
        ++count;
        double v = double(mask.v[i]);
        if (v > best) { second = best; best = v; }
        else if (v > second) { second = v; }
    }
    if (count < 2) return 0.0;
    return best - second;
}

// Online epoch selection. Feeds on (record, mask snapshot) pairs and keeps
// the eligible epoch with the largest peak gap; if no epoch ever satisfies
// both thresholds, falls back to the epoch minimizing L_s + lambda * L_m.
// Ties resolve to the earliest epoch in both cases.
template <typename T>
class CpfTracker {
public:
    CpfTracker(double alpha, double beta, double lambda)
        : alpha_(alpha), beta_(beta), lambda_(lambda) {}

    void feed(const CpfRecord& rec, const GridT<T>& snapshot) {
        if (rec.similarity < alpha_ && rec.mask < beta_) {
            if (!has_eligible_ || rec.peak_gap > best_gap_) {
                has_eligible_ = true;
                best_gap_ = rec.peak_gap;
                best_epoch_ = rec.epoch;
                best_snapshot_ = snapshot;
            }
        }
        double score = rec.similarity + lambda_ * rec.mask;
        if (!has_fallback_ || score < fallback_score_) {
            has_fallback_ = true;
            fallback_score_ = score;
            fallback_epoch_ = rec.epoch;
            fallback_snapshot_ = snapshot;
        }
    }

    bool eligible() const { return has_eligible_; }
    int selected_epoch() const { return has_eligible_ ? best_epoch_ : fallback_epoch_; }
    const GridT<T>& snapshot() const {
        return has_eligible_ ? best_snapshot_ : fallback_snapshot_;
    }
    bool empty() const { return !has_eligible_ && !has_fallback_; }

private:
    double alpha_, beta_, lambda_;
    bool has_eligible_ = false, has_fallback_ = false;
    double best_gap_ = 0.0, fallback_score_ = 0.0;
    int best_epoch_ = 0, fallback_epoch_ = 0;
    GridT<T> best_snapshot_, fallback_snapshot_;
};

// Train one mask vector by plain gradient descent on the consistency loss,
// clamping entries to [0,1] after every step, and pick the epoch via the
// tracker above. Losses recorded at each checked epoch describe the mask
// *after* that many steps.
template <typename T>
CpfReportT<T> train_mask(const ClassifierT<T>& model, const StageInputT<T>& stage,
                         const GridT<T>& omega_prev, const CpfConfig& cfg,
                         ForwardCtxT<T>& ctx, MaskVectorT<T>* out_mask = nullptr) {
    cfg.validate();
    int rows = omega_prev.rows, cols = omega_prev.cols;
    GridT<T> mask(rows, cols, T(cfg.zeta));
    CpfTracker<T> tracker(cfg.alpha, cfg.beta, cfg.lambda);
    CpfReportT<T> report;

    GridT<T> grad(rows, cols);
    int h = stage.image.dim(0), w = stage.image.dim(1);
    for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
        ConsistencyValue val;
        try {
            val = consistency_loss(model, stage, omega_prev, mask, cfg.lambda, ctx, &grad);
        } catch (const NumericError& e) {
            report.valid = false;
            report.abort_reason = e.what();
            break;
        }
        if (!std::isfinite(val.total)) {
            report.valid = false;
            report.abort_reason = "non-finite consistency loss";
            break;
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            double v = double(mask.v[i]) - cfg.learning_rate * double(grad.v[i]);
            mask.v[i] = T(std::min(1.0, std::max(0.0, v)));
        }
        if (epoch % cfg.check_every == 0 || epoch == cfg.total_epochs) {
            GridT<T> prod = hadamard(omega_prev, mask);
            TensorT<T> mask_full = upsample_bilinear(prod, h, w);
            TensorT<T> logits = forward_logits(model, apply_mask(stage.image, mask_full), ctx);
            double ls = 0.0;
            for (std::size_t i = 0; i < logits.size(); ++i) {
                double d = double(logits.data[i]) - double(stage.base_logits.data[i]);
                ls += d * d;
            }
            CpfRecord rec{epoch, ls, mask_loss(mask), peak_gap(mask, omega_prev)};
            report.records.push_back(rec);
            tracker.feed(rec, mask);
        }
    }

    if (tracker.empty()) {
        // aborted before the first checkpoint; report the raw mask state
        report.selected_epoch = 0;
        report.eligible_found = false;
        report.trained = mask;
    } else {
        report.selected_epoch = tracker.selected_epoch();
        report.eligible_found = tracker.eligible();
        report.trained = tracker.snapshot();
    }
    if (out_mask) {
        out_mask->grid = report.trained;
    }
    return report;
}

// Position of the maximum over active (omega == 1) cells, row-major ties.
// Coordinates are zero-based (row, col).
template <typename T>
std::pair<int, int> argmax_position(const GridT<T>& trained, const GridT<T>& omega_prev) {
    if (!trained.same_shape(omega_prev)) throw ShapeError("argmax: grid shape mismatch");
    int br = -1, bc = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < trained.rows; ++r)
        for (int c = 0; c < trained.cols; ++c) {
            if (omega_prev.at(r, c) == T(0)) continue;
            double v = double(trained.at(r, c));
            if (v > best) { best = v; br = r; bc = c; }
        }
    if (br < 0) throw Error("argmax: no active cells");
    return {br, bc};
}

// One-hot inversion: all ones except a single zero at the winner.
template <typename T>
GridT<T> one_hot_invert(int winner_row, int winner_col, int rows, int cols) {
    if (winner_row < 0 || winner_row >= rows || winner_col < 0 || winner_col >= cols)
        throw ShapeError("one_hot_invert: winner out of bounds");
    GridT<T> e = GridT<T>::ones(rows, cols);
    e.at(winner_row, winner_col) = T(0);
    return e;
}

}  // namespace hspi
