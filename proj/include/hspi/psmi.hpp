#pragma once

#include <vector>

#include <json.hpp>

#include "hspi/hierarchy.hpp"
#include "hspi/tensor.hpp"

namespace hspi {

struct PsmiConfig {
    int vote_threshold = 8;  // epsilon
    int benchmark = 1;       // i_b
};

// Pixel footprint of one identified patch: q = 1 - G_N(E), so the ones mark
// exactly the winner cell after nearest-neighbor upsampling.
template <typename T>
struct PatchIndicatorT {
    TensorT<T> map;
    int size_index = 0;
    int stage_index = 0;
};

using PatchIndicator = PatchIndicatorT<float>;

template <typename T>
PatchIndicatorT<T> patch_indicator(const GridT<T>& local_mask, int h, int w,
                                   int size_index = 0, int stage_index = 0) {
    PatchIndicatorT<T> q;
    q.map = upsample_nearest(local_mask, h, w);
    for (T& v : q.map.data) v = T(1) - v;
    q.size_index = size_index;
    q.stage_index = stage_index;
    return q;
}

// 1 iff the two footprints share any positive pixel (max of the elementwise
// product).
template <typename T>
int intersects(const PatchIndicatorT<T>& a, const PatchIndicatorT<T>& b) {
    if (!a.map.same_shape(b.map)) throw ShapeError("intersects: image size mismatch");
    for (std::size_t i = 0; i < a.map.size(); ++i)
        if (a.map.data[i] * b.map.data[i] > T(0)) return 1;
    return 0;
}

struct PatchDecision {
    int stage = 0;   // j (1-based)
    int votes = 0;
    bool kept = false;
};

template <typename T>
struct LocalizationResultT {
    TensorT<T> map;  // final binary map S
    std::vector<PatchDecision> decisions;
};

using LocalizationResult = LocalizationResultT<float>;

// Keep benchmark patch j iff at least `vote_threshold` other sizes produced
// an overlapping patch; the final map is the union of kept footprints.
template <typename T>
LocalizationResultT<T> select_patches(const std::vector<PatchIndicatorT<T>>& benchmark,
                                      const std::vector<std::vector<PatchIndicatorT<T>>>& others,
                                      int vote_threshold) {
    if (benchmark.empty()) throw ConfigError("select_patches: no benchmark patches");
    if (vote_threshold < 0 || vote_threshold > int(others.size()))
        throw ConfigError("select_patches: vote threshold outside [0, I-1]");
    int h = benchmark.front().map.dim(0), w = benchmark.front().map.dim(1);

    LocalizationResultT<T> out;
    out.map = TensorT<T>({h, w});
    for (std::size_t j = 0; j < benchmark.size(); ++j) {
        PatchDecision d;
        d.stage = int(j) + 1;
        for (const auto& size_list : others) {
            int hit = 0;
            for (const auto& q : size_list)
                if (intersects(benchmark[j], q)) { hit = 1; break; }
            d.votes += hit;
        }
        d.kept = d.votes >= vote_threshold;
        if (d.kept)
            for (std::size_t i = 0; i < out.map.size(); ++i)
                out.map.data[i] = std::max(out.map.data[i], benchmark[j].map.data[i]);
        out.decisions.push_back(d);
    }
    return out;
}

// Build indicators from a hierarchy run and apply the selection.
template <typename T>
LocalizationResultT<T> select_patches(const HierarchyResultT<T>& hier, int image_h,
                                      int image_w, const PsmiConfig& cfg,
                                      int stages_limit = -1) {
    if (hier.skipped) throw ConfigError("select_patches: hierarchy was skipped");
    int ib = cfg.benchmark;
    if (ib < 1 || ib > int(hier.sizes.size()))
        throw ConfigError("select_patches: benchmark index out of range");

    auto indicators = [&](const SizeRunT<T>& run) {
        std::vector<PatchIndicatorT<T>> out;
        int count = stages_limit < 0 ? int(run.stages.size())
                                     : std::min<int>(stages_limit, int(run.stages.size()));
        for (int j = 0; j < count; ++j)
            out.push_back(patch_indicator(run.stages[std::size_t(j)].local_mask, image_h,
                                          image_w, run.size_index, j + 1));
        return out;
    };

    std::vector<PatchIndicatorT<T>> benchmark = indicators(hier.sizes[std::size_t(ib - 1)]);
    std::vector<std::vector<PatchIndicatorT<T>>> others;
    for (const auto& run : hier.sizes)
        if (run.size_index != ib) others.push_back(indicators(run));
    return select_patches(benchmark, others, cfg.vote_threshold);
}

template <typename T>
nlohmann::json votes_to_json(const LocalizationResultT<T>& r, int vote_threshold) {
    nlohmann::json j;
    j["vote_threshold"] = vote_threshold;
    j["patches"] = nlohmann::json::array();
    for (const PatchDecision& d : r.decisions)
        j["patches"].push_back({{"stage", d.stage}, {"votes", d.votes}, {"kept", d.kept}});
    return j;
}

}  // namespace hspi
