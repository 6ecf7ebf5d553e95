#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hspi/spi.hpp"

namespace hspi {

// Grid-size schedule across the I size categories. Size index i is 1-based
// as in all reports; grid i is (grid_base + i) cells square.
struct SizeSchedule {
    int num_sizes = 10;   // I
    int grid_base = 6;    // H_i = W_i = grid_base + i
    int stages = 15;      // J
    int image_size = 224; // H = W
    int benchmark = 1;    // i_b

    int grid_size(int i) const { return grid_base + i; }

    void validate() const {
        if (num_sizes < 1 || stages < 1) throw ConfigError("schedule: I and J must be >= 1");
        if (benchmark < 1 || benchmark > num_sizes)
            throw ConfigError("schedule: benchmark index out of range");
        if (grid_size(1) < 1) throw ConfigError("schedule: grid size must be >= 1");
        if (grid_size(num_sizes) > image_size)
            throw ConfigError("schedule: grid larger than image");
        for (int i = 1; i <= num_sizes; ++i)
            if (grid_size(i) * grid_size(i) <= stages)
                throw ConfigError("schedule: J leaves no active cell on grid " +
                                  std::to_string(grid_size(i)));
    }
};

// Elementwise product of rigid local masks; the all-ones stage-0 mask is the
// implicit starting point.
template <typename T>
GridT<T> compose_global_mask(const std::vector<GridT<T>>& locals) {
    if (locals.empty()) throw ConfigError("compose_global_mask: need grid dimensions");
    GridT<T> omega = GridT<T>::ones(locals.front().rows, locals.front().cols);
    for (const GridT<T>& e : locals) omega = hadamard(omega, e);
    return omega;
}

// X_(i,j) = G_N(omega) * X_0: hard-edged nearest-neighbor masking for stage
// inputs; the smooth bilinear path is used only inside the training loss.
template <typename T>
TensorT<T> stage_input(const TensorT<T>& x0, const GridT<T>& omega) {
    return apply_mask(x0, upsample_nearest(omega, x0.dim(0), x0.dim(1)));
}

template <typename T>
struct StageOutcome {
    int winner_row = 0, winner_col = 0;
    GridT<T> local_mask;          // E_(i,j)
    CpfReportT<T> report;
    int predicted_class = 0;      // argmax f(X_(i,j)), recorded for analysis
    bool valid = true;            // false when the stage fell back on intensity
};

template <typename T>
struct SizeRunT {
    int size_index = 1;
    int grid = 0;
    std::vector<StageOutcome<T>> stages;
    GridT<T> final_global;        // Omega_(i,J)
};

template <typename T>
struct HierarchyResultT {
    bool skipped = false;
    int predicted_class = 0;
    std::vector<float> logits;
    std::vector<SizeRunT<T>> sizes;
};

using HierarchyResult = HierarchyResultT<float>;

namespace detail {

// Stage-failure fallback: the active cell whose nearest-neighbor pixel
// footprint has the highest mean intensity.
template <typename T>
std::pair<int, int> brightest_active_cell(const TensorT<T>& x0, const GridT<T>& omega) {
    int h = x0.dim(0), w = x0.dim(1);
    int br = -1, bc = -1;
    double best = -1.0;
    for (int r = 0; r < omega.rows; ++r) {
        auto [y0, y1] = nearest_span(omega.rows, h, r);
        for (int c = 0; c < omega.cols; ++c) {
            if (omega.at(r, c) == T(0)) continue;
            auto [x0i, x1i] = nearest_span(omega.cols, w, c);
            double acc = 0.0;
            long cnt = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0i; x < x1i; ++x) {
                    for (int ch = 0; ch < 3; ++ch) acc += double(x0(y, x, ch));
                    cnt += 3;
                }
            double mean = cnt ? acc / double(cnt) : 0.0;
            if (mean > best) { best = mean; br = r; bc = c; }
        }
    }
    if (br < 0) throw Error("no active cells for fallback winner");
    return {br, bc};
}

}  // namespace detail

// Run SPI for all J stages of one size category.
template <typename T>
SizeRunT<T> run_size(const ClassifierT<T>& model, const TensorT<T>& x0, int size_index,
                     int grid, int stages, const CpfConfig& cpf) {
    SizeRunT<T> run;
    run.size_index = size_index;
    run.grid = grid;
    GridT<T> omega = GridT<T>::ones(grid, grid);
    ForwardCtxT<T> ctx;
    for (int j = 1; j <= stages; ++j) {
        StageOutcome<T> stage;
        StageInputT<T> in = make_stage_input(model, stage_input(x0, omega), ctx);
        {
            const auto& lg = in.base_logits;
            stage.predicted_class =
                lg.data[kClassDiseased] > lg.data[kClassNormal] ? kClassDiseased : kClassNormal;
        }
        stage.report = train_mask(model, in, omega, cpf, ctx);
        std::pair<int, int> winner;
        if (stage.report.valid) {
            winner = argmax_position(stage.report.trained, omega);
        } else {
            winner = detail::brightest_active_cell(x0, omega);
            stage.valid = false;
        }
        stage.winner_row = winner.first;
        stage.winner_col = winner.second;
        stage.local_mask = one_hot_invert<T>(winner.first, winner.second, grid, grid);
        omega = hadamard(omega, stage.local_mask);
        run.stages.push_back(std::move(stage));
    }
    run.final_global = omega;
    return run;
}

// The full hierarchy: predict on X_0, then for every size category identify
// J patches, masking out each winner before the next stage. Images the
// model predicts as normal are skipped unless forced.
template <typename T>
HierarchyResultT<T> run_hierarchy(const ClassifierT<T>& model, const TensorT<T>& x0,
                                  const SizeSchedule& schedule, const CpfConfig& cpf,
                                  bool force = false) {
    schedule.validate();
    HierarchyResultT<T> result;
    TensorT<T> logits = forward_logits(model, x0);
    result.logits.assign(logits.data.begin(), logits.data.end());
    result.predicted_class =
        logits.data[kClassDiseased] > logits.data[kClassNormal] ? kClassDiseased : kClassNormal;
    if (result.predicted_class == kClassNormal && !force) {
        result.skipped = true;
        return result;
    }
    for (int i = 1; i <= schedule.num_sizes; ++i)
        result.sizes.push_back(
            run_size(model, x0, i, schedule.grid_size(i), schedule.stages, cpf));
    return result;
}

template <typename T>
nlohmann::json hierarchy_to_json(const HierarchyResultT<T>& r) {
    nlohmann::json j;
    j["skipped"] = r.skipped;
    j["predicted_class"] = r.predicted_class;
    j["predicted_label"] = r.predicted_class == kClassDiseased ? "diseased" : "normal";
    j["logits"] = r.logits;
    j["sizes"] = nlohmann::json::array();
    for (const auto& run : r.sizes) {
        nlohmann::json js;
        js["size_index"] = run.size_index;
        js["grid"] = run.grid;
        js["stages"] = nlohmann::json::array();
        for (std::size_t k = 0; k < run.stages.size(); ++k) {
            const auto& st = run.stages[k];
            const CpfRecord* sel = nullptr;
            for (const auto& rec : st.report.records)
                if (rec.epoch == st.report.selected_epoch) { sel = &rec; break; }
            nlohmann::json jt;
            jt["stage"] = k + 1;
            jt["winner"] = {st.winner_row, st.winner_col};
            jt["epoch"] = st.report.selected_epoch;
            jt["eligible"] = st.report.eligible_found;
            jt["valid"] = st.valid;
            jt["predicted_class"] = st.predicted_class;
            jt["similarity_loss"] = sel ? sel->similarity : 0.0;
            jt["mask_loss"] = sel ? sel->mask : 0.0;
            jt["peak_gap"] = sel ? sel->peak_gap : 0.0;
            js["stages"].push_back(std::move(jt));
        }
        j["sizes"].push_back(std::move(js));
    }
    return j;
}

// Trajectory dump consumed by the render command.
inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<CpfRecord>& records) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write trajectory: " + path);
    os << "epoch,L_s,L_m,D_n\n";
    char buf[128];
    for (const CpfRecord& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.epoch, r.similarity,
                      r.mask, r.peak_gap);
        os << buf;
    }
}

inline std::vector<CpfRecord> read_trajectory_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read trajectory: " + path);
    std::string line;
    std::getline(is, line);  // header
    std::vector<CpfRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        CpfRecord r;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &r.epoch, &r.similarity, &r.mask,
                        &r.peak_gap) != 4)
            throw IoError("bad trajectory row in " + path + ": " + line);
        out.push_back(r);
    }
    return out;
}

}  // namespace hspi
