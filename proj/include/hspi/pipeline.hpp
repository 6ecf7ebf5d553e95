#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hspi/baseline.hpp"
#include "hspi/config.hpp"
#include "hspi/dataset.hpp"
#include "hspi/hierarchy.hpp"
#include "hspi/metrics.hpp"
#include "hspi/psmi.hpp"

namespace hspi {

struct LocalizeOutcome {
    HierarchyResult hier;
    LocalizationResult selection;  // meaningful only when !hier.skipped
    bool forced = false;           // emitted despite a normal prediction
};

inline LocalizeOutcome localize_image(const Classifier& model, const Tensor& x0,
                                      const RunConfig& cfg, bool force) {
    LocalizeOutcome out;
    out.hier = run_hierarchy(model, x0, cfg.schedule(), cfg.cpf(), force);
    if (!out.hier.skipped) {
        out.selection = select_patches(out.hier, x0.dim(0), x0.dim(1), cfg.psmi());
        out.forced = force && out.hier.predicted_class == kClassNormal;
    }
    return out;
}

// Per-image artifact directory: hierarchy.json always; map.png, votes.json
// and benchmark-size trajectory CSVs when not skipped; all sizes' CSVs with
// all_trajectories.
inline void write_localize_artifacts(const std::string& dir, const LocalizeOutcome& out,
                                     const RunConfig& cfg, bool all_trajectories) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json hj = hierarchy_to_json(out.hier);
    hj["forced"] = out.forced;
    std::ofstream hs(fs::path(dir) / "hierarchy.json");
    hs << hj.dump(2) << "\n";
    if (!hs) throw IoError("failed to write hierarchy.json in " + dir);
    if (out.hier.skipped) return;

    write_png_gray((fs::path(dir) / "map.png").string(), out.selection.map);
    std::ofstream vs(fs::path(dir) / "votes.json");
    vs << votes_to_json(out.selection, cfg.vote_threshold).dump(2) << "\n";

    for (const auto& run : out.hier.sizes) {
        if (!all_trajectories && run.size_index != cfg.benchmark) continue;
        for (std::size_t j = 0; j < run.stages.size(); ++j) {
            char name[64];
            std::snprintf(name, sizeof name, "traj_i%d_j%02d.csv", run.size_index,
                          int(j) + 1);
            write_trajectory_csv((fs::path(dir) / name).string(),
                                 run.stages[j].report.records);
        }
    }
}

struct EvalRow {
    std::string image;
    std::string method;
    double f1 = 0, ppv = 0, sp = 0, asd_px = 0, prop = 0;
    std::vector<std::string> flags;
};

// Metrics for one prediction. The pseudo-mask feeds the counting metrics and
// ASD; Proportion is computed on the (possibly continuous) saliency map.
inline EvalRow evaluate_pair(const std::string& name, const std::string& method,
                             const Tensor& pseudo_mask, const Tensor& saliency,
                             const Tensor& gt) {
    EvalRow row;
    row.image = name;
    row.method = method;
    ConfusionCounts c = confusion(pseudo_mask, gt);
    MetricValue f1 = f1_score(c), ppv = ppv_score(c), sp = sp_score(c);
    MetricValue a = asd(pseudo_mask, gt), pr = proportion(saliency, gt);
    row.f1 = f1.value;
    row.ppv = ppv.value;
    row.sp = sp.value;
    row.asd_px = a.value;
    row.prop = pr.value;
    if (f1.degenerate) row.flags.push_back("f1_degenerate");
    if (ppv.degenerate) row.flags.push_back("ppv_degenerate");
    if (sp.degenerate) row.flags.push_back("sp_degenerate");
    if (a.degenerate) row.flags.push_back("asd_empty_pred");
    if (pr.degenerate) row.flags.push_back("proportion_zero_mass");
    return row;
}

inline void write_report_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write report: " + path);
    os << "image,method,F1,PPV,SP,ASD,Proportion,flags\n";
    char buf[256];
    for (const EvalRow& r : rows) {
        std::string flags;
        for (std::size_t i = 0; i < r.flags.size(); ++i)
            flags += (i ? ";" : "") + r.flags[i];
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n",
                      r.image.c_str(), r.method.c_str(), r.f1, r.ppv, r.sp, r.asd_px,
                      r.prop, flags.c_str());
        os << buf;
    }
}

struct MethodSummary {
    std::string method;
    int images = 0;
    double f1 = 0, ppv = 0, sp = 0, asd_px = 0, prop = 0;
};

inline std::vector<MethodSummary> summarize(const std::vector<EvalRow>& rows) {
    std::vector<MethodSummary> out;
    for (const EvalRow& r : rows) {
        MethodSummary* s = nullptr;
        for (auto& m : out)
            if (m.method == r.method) { s = &m; break; }
        if (!s) {
            out.push_back({});
            s = &out.back();
            s->method = r.method;
        }
        s->images += 1;
        s->f1 += r.f1;
        s->ppv += r.ppv;
        s->sp += r.sp;
        s->asd_px += r.asd_px;
        s->prop += r.prop;
    }
    for (auto& m : out) {
        double n = std::max(1, m.images);
        m.f1 /= n; m.ppv /= n; m.sp /= n; m.asd_px /= n; m.prop /= n;
    }
    return out;
}

inline nlohmann::json summary_to_json(const std::vector<MethodSummary>& sums) {
    nlohmann::json j;
    for (const MethodSummary& m : sums)
        j[m.method] = {{"images", m.images}, {"F1", m.f1},     {"PPV", m.ppv},
                       {"SP", m.sp},         {"ASD", m.asd_px}, {"Proportion", m.prop}};
    return j;
}

}  // namespace hspi
