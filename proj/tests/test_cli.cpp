#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hspi/image_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(HSPI_CLI_PATH) + " " + args + " 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    EXPECT_NE(pipe, nullptr);
    RunResult r;
    std::array<char, 512> buf;
    while (std::fgets(buf.data(), int(buf.size()), pipe)) r.output += buf.data();
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

// shared tiny workspace built once: dataset -> checkpoint -> localizations
class CliPipeline : public ::testing::Test {
protected:
    static fs::path ws;
    static std::string cfg;

    static void SetUpTestSuite() {
        ws = fs::temp_directory_path() / "hspi_cli_ws";
        fs::remove_all(ws);
        fs::create_directories(ws);

        // tiny configuration so the whole pipeline runs in seconds
        nlohmann::json j = {
            {"image_size", 32},
            {"num_sizes", 2},
            {"grid_base", 2},   // grids 3 and 4
            {"stages", 2},
            {"vote_threshold", 1},
            {"epochs", 60},
            {"check_every", 20},
            {"alpha", 0.5},
            {"beta", 0.6},
            {"synth", {{"normal_count", 6},
                       {"diseased_count", 6},
                       {"test_normal_count", 2},
                       {"test_diseased_count", 3},
                       {"lesion_radius_min", 3.0},
                       {"lesion_radius_max", 6.0}}},
            {"train", {{"epochs", 12}, {"batch_size", 4}}}};
        cfg = (ws / "tiny.json").string();
        std::ofstream os(cfg);
        os << j.dump(2);
    }

    static void TearDownTestSuite() { fs::remove_all(ws); }

    std::string with_cfg(const std::string& rest) {
        return "--config " + cfg + " --seed 11 " + rest;
    }
};

fs::path CliPipeline::ws;
std::string CliPipeline::cfg;

}  // namespace

TEST_F(CliPipeline, Step1_GenDataWritesBothSplits) {
    RunResult r = run_cli("gen-data " + with_cfg("--out " + (ws / "ds").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_TRUE(fs::exists(ws / "ds/train/manifest.json"));
    EXPECT_TRUE(fs::exists(ws / "ds/test/manifest.json"));
    int train_pngs = 0;
    for (const auto& e : fs::directory_iterator(ws / "ds/train"))
        train_pngs += e.path().extension() == ".png";
    EXPECT_EQ(train_pngs, 24);  // 12 images + 12 masks
}

TEST_F(CliPipeline, Step2_GenDataIsSeedDeterministic) {
    RunResult r = run_cli("gen-data " + with_cfg("--out " + (ws / "ds2").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    for (const auto& e : fs::directory_iterator(ws / "ds/test")) {
        fs::path other = ws / "ds2/test" / e.path().filename();
        ASSERT_TRUE(fs::exists(other));
        EXPECT_EQ(file_bytes(e.path()), file_bytes(other));
    }
    // refusing to clobber without --force
    RunResult again = run_cli("gen-data " + with_cfg("--out " + (ws / "ds2").string()));
    EXPECT_EQ(again.exit_code, 2);
    RunResult forced =
        run_cli("gen-data " + with_cfg("--force --out " + (ws / "ds2").string()));
    EXPECT_EQ(forced.exit_code, 0) << forced.output;
}

TEST_F(CliPipeline, Step3_BadLesionConfigExitsTwo) {
    RunResult r = run_cli("gen-data --config " + cfg +
                          " --seed 11 --image-size 32 --out " + (ws / "bad").string() +
                          " --force");
    // make the lesion radius impossible via an inline config override file
    nlohmann::json j = {{"image_size", 32},
                        {"synth", {{"lesion_radius_min", 50.0}, {"lesion_radius_max", 60.0}}}};
    std::ofstream os(ws / "bad.json");
    os << j.dump();
    os.close();
    RunResult bad = run_cli("gen-data --config " + (ws / "bad.json").string() +
                            " --out " + (ws / "bad_out").string());
    EXPECT_EQ(bad.exit_code, 2);
    EXPECT_NE(bad.output.find("lesion"), std::string::npos);
}

TEST_F(CliPipeline, Step4_TrainWritesCheckpointDeterministically) {
    RunResult r = run_cli("train " + with_cfg("--data " + (ws / "ds").string() +
                                              " --out " + (ws / "model.hspc").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    ASSERT_TRUE(fs::exists(ws / "model.hspc"));

    RunResult r2 = run_cli("train " + with_cfg("--data " + (ws / "ds").string() +
                                               " --out " + (ws / "model2.hspc").string()));
    ASSERT_EQ(r2.exit_code, 0) << r2.output;
    EXPECT_EQ(file_bytes(ws / "model.hspc"), file_bytes(ws / "model2.hspc"));

    RunResult missing = run_cli("train " + with_cfg("--data " + (ws / "nope").string() +
                                                    " --out x.hspc"));
    EXPECT_EQ(missing.exit_code, 2);
}

TEST_F(CliPipeline, Step5_LocalizeEmitsArtifacts) {
    RunResult r = run_cli("localize " +
                          with_cfg("--checkpoint " + (ws / "model.hspc").string() +
                                   " --data " + (ws / "ds/test").string() +
                                   " --label diseased --force --trajectories --out " +
                                   (ws / "loc").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    int with_maps = 0;
    for (const auto& e : fs::directory_iterator(ws / "loc")) {
        EXPECT_TRUE(fs::exists(e.path() / "hierarchy.json"));
        if (fs::exists(e.path() / "map.png")) {
            ++with_maps;
            EXPECT_TRUE(fs::exists(e.path() / "votes.json"));
            EXPECT_TRUE(fs::exists(e.path() / "traj_i1_j01.csv"));
            EXPECT_TRUE(fs::exists(e.path() / "traj_i2_j02.csv"));
            hspi::Tensor map = hspi::read_png_gray((e.path() / "map.png").string());
            EXPECT_EQ(map.dim(0), 32);
            for (float v : map.data) EXPECT_TRUE(v == 0.0f || v == 1.0f);
        }
    }
    EXPECT_EQ(with_maps, 3);  // all diseased-labeled test samples, forced
}

TEST_F(CliPipeline, Step6_LocalizeRepeatIsBitIdentical) {
    RunResult r = run_cli("localize " +
                          with_cfg("--checkpoint " + (ws / "model.hspc").string() +
                                   " --data " + (ws / "ds/test").string() +
                                   " --label diseased --force --out " +
                                   (ws / "loc_again").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    for (const auto& e : fs::directory_iterator(ws / "loc_again")) {
        fs::path other = ws / "loc" / e.path().filename() / "map.png";
        if (fs::exists(e.path() / "map.png"))
            EXPECT_EQ(file_bytes(e.path() / "map.png"), file_bytes(other));
    }
}

TEST_F(CliPipeline, Step7_NormalPredictionSkipsWithoutForce) {
    // normal-labeled samples should mostly be predicted normal by the tiny
    // model; localize without --force must then record a skip and no map
    RunResult r = run_cli("localize " +
                          with_cfg("--checkpoint " + (ws / "model.hspc").string() +
                                   " --data " + (ws / "ds/test").string() +
                                   " --label normal --limit 1 --out " +
                                   (ws / "loc_norm").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    for (const auto& e : fs::directory_iterator(ws / "loc_norm")) {
        std::ifstream is(e.path() / "hierarchy.json");
        nlohmann::json j;
        is >> j;
        if (j["skipped"].get<bool>()) {
            EXPECT_FALSE(fs::exists(e.path() / "map.png"));
            EXPECT_NE(r.output.find("skip"), std::string::npos);
        }
    }
}

TEST_F(CliPipeline, Step8_EvaluateScoresAndPairs) {
    RunResult r = run_cli("evaluate " + with_cfg("--pred " + (ws / "loc").string() +
                                                 " --data " + (ws / "ds/test").string() +
                                                 " --baseline occlusion --checkpoint " +
                                                 (ws / "model.hspc").string() + " --out " +
                                                 (ws / "eval").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_TRUE(fs::exists(ws / "eval/report.csv"));
    EXPECT_TRUE(fs::exists(ws / "eval/summary.json"));
    std::ifstream is(ws / "eval/summary.json");
    nlohmann::json j;
    is >> j;
    EXPECT_TRUE(j.contains("hspi"));
    EXPECT_TRUE(j.contains("occlusion"));
    EXPECT_EQ(j["hspi"]["images"].get<int>(), 3);
}

TEST_F(CliPipeline, Step9_PerfectPredictionsScoreOne) {
    // hand-build predictions equal to the ground truth masks
    fs::path pdir = ws / "perfect";
    std::ifstream mis(ws / "ds/test/manifest.json");
    nlohmann::json manifest;
    mis >> manifest;
    for (const auto& s : manifest["samples"]) {
        if (s["label"].get<std::string>() != "diseased") continue;
        std::string stem = fs::path(s["image"].get<std::string>()).stem().string();
        fs::create_directories(pdir / stem);
        fs::copy_file(ws / "ds/test" / s["mask"].get<std::string>(),
                      pdir / stem / "map.png", fs::copy_options::overwrite_existing);
        std::ofstream hs(pdir / stem / "hierarchy.json");
        hs << "{\"skipped\": false}";
    }
    RunResult r = run_cli("evaluate " + with_cfg("--pred " + pdir.string() + " --data " +
                                                 (ws / "ds/test").string() + " --out " +
                                                 (ws / "eval_perfect").string()));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::ifstream is(ws / "eval_perfect/summary.json");
    nlohmann::json j;
    is >> j;
    EXPECT_DOUBLE_EQ(j["hspi"]["F1"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(j["hspi"]["PPV"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(j["hspi"]["ASD"].get<double>(), 0.0);
}

TEST_F(CliPipeline, Step10_MismatchedSetsArePairingError) {
    fs::path partial = ws / "partial_pred";
    fs::remove_all(partial);
    fs::create_directories(partial);  // empty: every diseased sample unmatched
    RunResult r = run_cli("evaluate " + with_cfg("--pred " + partial.string() +
                                                 " --data " + (ws / "ds/test").string() +
                                                 " --out " + (ws / "eval_bad").string()));
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("pair"), std::string::npos);
}

TEST_F(CliPipeline, Step11_RenderPanelsAndOverlay) {
    // find a localized diseased sample and its source image
    std::string stem;
    for (const auto& e : fs::directory_iterator(ws / "loc"))
        if (fs::exists(e.path() / "map.png")) { stem = e.path().filename().string(); break; }
    ASSERT_FALSE(stem.empty());

    RunResult r = run_cli("render --result " + (ws / "loc" / stem).string() + " --image " +
                          (ws / "ds/test" / (stem + ".png")).string() + " --out " +
                          (ws / "render").string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    hspi::Tensor overlay = hspi::read_png_rgb((ws / "render/overlay.png").string());
    EXPECT_EQ(overlay.dim(0), 32);  // dimensions equal the input image
    EXPECT_EQ(overlay.dim(1), 32);
    int panels = 0;
    for (const auto& e : fs::directory_iterator(ws / "render"))
        panels += e.path().filename().string().rfind("panel_", 0) == 0;
    EXPECT_EQ(panels, 2);  // one panel per stage, J = 2
}

TEST_F(CliPipeline, Step12_RenderSkippedImageIsError) {
    fs::path skipdir = ws / "skipmark";
    fs::create_directories(skipdir);
    std::ofstream os(skipdir / "hierarchy.json");
    os << "{\"skipped\": true}";
    os.close();
    RunResult r = run_cli("render --result " + skipdir.string() + " --image " +
                          (ws / "ds/test/img_00000.png").string() + " --out " +
                          (ws / "render_skip").string());
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.output.find("skip"), std::string::npos);
}

TEST(CliBasics, UnknownSubcommandExitsTwo) {
    RunResult r = run_cli("frobnicate");
    EXPECT_EQ(r.exit_code, 2);
}

TEST(CliBasics, HelpExitsZero) {
    RunResult r = run_cli("--help");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.output.find("localize"), std::string::npos);
}
