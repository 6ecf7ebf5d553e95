#include <gtest/gtest.h>

#include "hspi/psmi.hpp"
#include "oracles.hpp"

using namespace hspi;

namespace {

// Random multi-size patch layout: for each grid size, J distinct winner
// cells, mirroring what a hierarchy run produces.
struct Layout {
    std::vector<int> grids;                          // per size
    std::vector<std::vector<std::pair<int, int>>> winners;  // [size][stage]
};

Layout random_layout(Rng& rng, const std::vector<int>& grids, int stages) {
    Layout out;
    out.grids = grids;
    for (int g : grids) {
        std::vector<std::pair<int, int>> cells;
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < g; ++c) cells.push_back({r, c});
        rng.shuffle(cells);
        cells.resize(std::size_t(stages));
        out.winners.push_back(cells);
    }
    return out;
}

std::vector<PatchIndicator> indicators_for(const Layout& lay, int size, int h, int w) {
    std::vector<PatchIndicator> out;
    int g = lay.grids[std::size_t(size)];
    for (std::size_t j = 0; j < lay.winners[std::size_t(size)].size(); ++j) {
        auto [r, c] = lay.winners[std::size_t(size)][j];
        out.push_back(patch_indicator(one_hot_invert<float>(r, c, g, g), h, w,
                                      size + 1, int(j) + 1));
    }
    return out;
}

}  // namespace

TEST(PatchIndicator, AllOnesMaskGivesEmptyMap) {
    PatchIndicator q = patch_indicator(Grid::ones(4, 4), 64, 64);
    for (float v : q.map.data) EXPECT_EQ(v, 0.0f);
}

TEST(PatchIndicator, TopLeftCellFootprint) {
    Grid e = one_hot_invert<float>(0, 0, 7, 7);
    PatchIndicator q = patch_indicator(e, 224, 224);
    long positives = 0;
    for (float v : q.map.data) positives += v == 1.0f;
    EXPECT_EQ(positives, (224 / 7) * (224 / 7));
    EXPECT_EQ(q.map(0, 0), 1.0f);
    EXPECT_EQ(q.map(31, 31), 1.0f);
    EXPECT_EQ(q.map(32, 32), 0.0f);
}

TEST(PatchIndicator, ComplementOfUpsampledMask) {
    Grid e = one_hot_invert<float>(2, 1, 5, 5);
    PatchIndicator q = patch_indicator(e, 64, 64);
    Tensor up = upsample_nearest(e, 64, 64);
    long q_pos = 0, up_pos = 0;
    for (float v : q.map.data) q_pos += v == 1.0f;
    for (float v : up.data) up_pos += v == 1.0f;
    EXPECT_EQ(q_pos + up_pos, 64 * 64);
}

TEST(Intersects, Examples) {
    Grid e = one_hot_invert<float>(1, 1, 4, 4);
    PatchIndicator q = patch_indicator(e, 64, 64);
    EXPECT_EQ(intersects(q, q), 1);

    PatchIndicator tl = patch_indicator(one_hot_invert<float>(0, 0, 4, 4), 64, 64);
    PatchIndicator br = patch_indicator(one_hot_invert<float>(3, 3, 4, 4), 64, 64);
    EXPECT_EQ(intersects(tl, br), 0);

    // a 7-grid cell and the 8-grid cell overlapping its corner
    PatchIndicator a = patch_indicator(one_hot_invert<float>(0, 0, 7, 7), 224, 224);
    PatchIndicator b = patch_indicator(one_hot_invert<float>(1, 1, 8, 8), 224, 224);
    EXPECT_TRUE(oracle::maps_overlap(a.map, b.map));
    EXPECT_EQ(intersects(a, b), 1);
}

TEST(SelectPatches, ZeroThresholdKeepsEverything) {
    Rng rng(211);
    Layout lay = random_layout(rng, {4, 5, 6}, 3);
    auto bench = indicators_for(lay, 0, 64, 64);
    std::vector<std::vector<PatchIndicator>> others = {indicators_for(lay, 1, 64, 64),
                                                       indicators_for(lay, 2, 64, 64)};
    LocalizationResult res = select_patches(bench, others, 0);
    for (const auto& d : res.decisions) EXPECT_TRUE(d.kept);
    // union of all benchmark footprints
    Tensor want({64, 64});
    for (const auto& q : bench)
        for (std::size_t i = 0; i < want.size(); ++i)
            want.data[i] = std::max(want.data[i], q.map.data[i]);
    EXPECT_EQ(res.map.data, want.data);
}

TEST(SelectPatches, UnanimityThreshold) {
    // benchmark patch at the very top-left; construct others so that it is
    // intersected by all sizes except one
    int h = 64, w = 64;
    auto bench = std::vector<PatchIndicator>{
        patch_indicator(one_hot_invert<float>(0, 0, 4, 4), h, w)};
    std::vector<std::vector<PatchIndicator>> others;
    for (int g = 5; g <= 8; ++g) {
        bool miss = g == 8;  // one size votes elsewhere
        int cell = miss ? g - 1 : 0;
        others.push_back({patch_indicator(one_hot_invert<float>(cell, cell, g, g), h, w)});
    }
    // 3 of 4 sizes intersect: kept at threshold 3, dropped at 4
    LocalizationResult at3 = select_patches(bench, others, 3);
    EXPECT_TRUE(at3.decisions[0].kept);
    EXPECT_EQ(at3.decisions[0].votes, 3);
    LocalizationResult at4 = select_patches(bench, others, 4);
    EXPECT_FALSE(at4.decisions[0].kept);
}

TEST(SelectPatches, VotesMatchRasterizationOracle) {
    Rng rng(223);
    std::vector<int> grids = {4, 5, 6, 7, 8};
    for (int trial = 0; trial < 50; ++trial) {
        int stages = rng.range(1, 4);
        Layout lay = random_layout(rng, grids, stages);
        auto bench = indicators_for(lay, 0, 64, 64);
        std::vector<std::vector<PatchIndicator>> others;
        for (int s = 1; s < int(grids.size()); ++s)
            others.push_back(indicators_for(lay, s, 64, 64));

        int eps = rng.range(0, int(grids.size()) - 1);
        LocalizationResult res = select_patches(bench, others, eps);

        for (int j = 0; j < stages; ++j) {
            auto [br, bc] = lay.winners[0][std::size_t(j)];
            Tensor bfoot = oracle::cell_footprint(grids[0], 64, 64, br, bc);
            int votes = 0;
            for (int s = 1; s < int(grids.size()); ++s) {
                bool any = false;
                for (auto [r, c] : lay.winners[std::size_t(s)]) {
                    Tensor f = oracle::cell_footprint(grids[std::size_t(s)], 64, 64, r, c);
                    if (oracle::maps_overlap(bfoot, f)) { any = true; break; }
                }
                votes += any;
            }
            EXPECT_EQ(res.decisions[std::size_t(j)].votes, votes) << "trial " << trial;
            EXPECT_EQ(res.decisions[std::size_t(j)].kept, votes >= eps);
            EXPECT_GE(votes, 0);
            EXPECT_LE(votes, int(grids.size()) - 1);
        }
    }
}

TEST(SelectPatches, KeptSetMonotoneInThreshold) {
    Rng rng(227);
    std::vector<int> grids = {4, 5, 6, 7, 8};
    for (int trial = 0; trial < 20; ++trial) {
        Layout lay = random_layout(rng, grids, 3);
        auto bench = indicators_for(lay, 0, 64, 64);
        std::vector<std::vector<PatchIndicator>> others;
        for (int s = 1; s < int(grids.size()); ++s)
            others.push_back(indicators_for(lay, s, 64, 64));

        std::vector<bool> prev;
        for (int eps = 0; eps <= int(grids.size()) - 1; ++eps) {
            LocalizationResult res = select_patches(bench, others, eps);
            if (!prev.empty())
                for (std::size_t j = 0; j < res.decisions.size(); ++j)
                    if (res.decisions[j].kept) EXPECT_TRUE(prev[j]);  // subset of looser
            prev.clear();
            for (const auto& d : res.decisions) prev.push_back(d.kept);
        }
    }
}

TEST(SelectPatches, MapIsBinaryUnionOfKept) {
    Rng rng(229);
    Layout lay = random_layout(rng, {4, 6}, 4);
    auto bench = indicators_for(lay, 0, 64, 64);
    std::vector<std::vector<PatchIndicator>> others = {indicators_for(lay, 1, 64, 64)};
    LocalizationResult res = select_patches(bench, others, 1);
    for (float v : res.map.data) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    Tensor want({64, 64});
    for (std::size_t j = 0; j < bench.size(); ++j)
        if (res.decisions[j].kept)
            for (std::size_t i = 0; i < want.size(); ++i)
                want.data[i] = std::max(want.data[i], bench[j].map.data[i]);
    EXPECT_EQ(res.map.data, want.data);
}

TEST(SelectPatches, ThresholdRangeValidation) {
    auto bench = std::vector<PatchIndicator>{
        patch_indicator(one_hot_invert<float>(0, 0, 4, 4), 16, 16)};
    std::vector<std::vector<PatchIndicator>> others = {
        {patch_indicator(one_hot_invert<float>(1, 1, 5, 5), 16, 16)}};
    EXPECT_THROW(select_patches(bench, others, -1), ConfigError);
    EXPECT_THROW(select_patches(bench, others, 2), ConfigError);
    EXPECT_NO_THROW(select_patches(bench, others, 1));
}
