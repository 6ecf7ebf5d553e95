#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hspi/classifier.hpp"
#include "hspi/synth.hpp"
#include "hspi/train.hpp"
#include "oracles.hpp"

using namespace hspi;
namespace fs = std::filesystem;

namespace {

Tensor random_image(Rng& rng, int n) {
    Tensor t({n, n, 3});
    for (auto& v : t.data) v = float(rng.u01());
    return t;
}

std::string temp_path(const char* name) {
    return (fs::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST(Classifier, DeterministicLogits) {
    Rng rng(71);
    Classifier m(16, 16);
    m.init_weights(5);
    Tensor img = random_image(rng, 16);
    Tensor a = forward_logits(m, img);
    Tensor b = forward_logits(m, img);
    EXPECT_EQ(a.data, b.data);  // bit for bit
}

TEST(Classifier, ZeroDenseHeadGivesZeroLogits) {
    Rng rng(73);
    Classifier m(16, 16);
    m.init_weights(5);
    std::fill(m.fc.weight.begin(), m.fc.weight.end(), 0.0f);
    std::fill(m.fc.bias.begin(), m.fc.bias.end(), 0.0f);
    Tensor logits = forward_logits(m, Tensor({16, 16, 3}));
    EXPECT_EQ(logits.data[0], 0.0f);
    EXPECT_EQ(logits.data[1], 0.0f);
}

TEST(Classifier, RejectsWrongImageShape) {
    Classifier m(16, 16);
    EXPECT_THROW(forward_logits(m, Tensor({16, 20, 3})), ShapeError);
}

TEST(InputGradient, ZeroUpstreamGivesZeroGradient) {
    Rng rng(79);
    Classifier m(16, 16);
    m.init_weights(5);
    Tensor g = input_gradient(m, random_image(rng, 16), Tensor({2}));
    for (float v : g.data) EXPECT_EQ(v, 0.0f);
}

TEST(InputGradient, MatchesFiniteDifferences) {
    Rng rng(83);
    ClassifierT<double> m(8, 8);
    m.init_weights(9);
    TensorT<double> img({8, 8, 3});
    for (auto& v : img.data) v = rng.u01();
    TensorT<double> upstream({2});
    upstream.data = {0.7, -1.3};

    ForwardCtxT<double> ctx;
    TensorT<double> analytic = input_gradient(m, img, upstream, ctx);
    auto loss = [&] {
        TensorT<double> lg = forward_logits(m, img, ctx);
        return upstream.data[0] * lg.data[0] + upstream.data[1] * lg.data[1];
    };
    int checked = 0;
    for (std::size_t i = 0; i < img.size(); i += 7) {  // sample positions
        double fd = oracle::central_diff(&img.data[i], loss);
        ASSERT_LT(oracle::rel_err(analytic.data[i], fd, 1e-5), 1e-3) << "pixel " << i;
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

TEST(InputGradient, LinearInUpstream) {
    Rng rng(89);
    Classifier m(16, 16);
    m.init_weights(11);
    Tensor img = random_image(rng, 16);
    Tensor a({2}), b({2}), sum({2});
    a.data = {0.3f, -0.2f};
    b.data = {-1.1f, 0.8f};
    sum.data = {a.data[0] + b.data[0], a.data[1] + b.data[1]};
    Tensor ga = input_gradient(m, img, a);
    Tensor gb = input_gradient(m, img, b);
    Tensor gs = input_gradient(m, img, sum);
    for (std::size_t i = 0; i < gs.size(); ++i)
        EXPECT_NEAR(gs.data[i], ga.data[i] + gb.data[i], 1e-6);
}

TEST(Train, MemorizesOneSample) {
    SynthConfig cfg;
    cfg.image_size = 16;
    cfg.lesion_radius_min = 2;
    cfg.lesion_radius_max = 4;
    Sample pos = generate_sample(cfg, Label::diseased, 3);
    Sample neg = generate_sample(cfg, Label::normal, 4);
    std::vector<Sample> set = {pos, neg};

    Classifier m(16, 16);
    TrainConfig tc;
    tc.epochs = 300;
    tc.batch_size = 2;
    tc.learning_rate = 0.05;
    tc.weight_decay = 0.0;
    tc.seed = 7;
    TrainReport rep = train(m, set, set, tc);
    EXPECT_LT(rep.epoch_loss.back(), 1e-3);
    EXPECT_EQ(rep.train_accuracy, 1.0);
}

TEST(Train, DeterministicGivenSeed) {
    SynthConfig cfg;
    cfg.image_size = 16;
    cfg.lesion_radius_min = 2;
    cfg.lesion_radius_max = 4;
    cfg.normal_count = 4;
    cfg.diseased_count = 4;
    auto set = generate(cfg);

    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 13;
    Classifier m1(16, 16), m2(16, 16);
    train(m1, set, {}, tc);
    train(m2, set, {}, tc);
    EXPECT_EQ(m1.conv1.weight, m2.conv1.weight);
    EXPECT_EQ(m1.conv3.weight, m2.conv3.weight);
    EXPECT_EQ(m1.fc.weight, m2.fc.weight);
    EXPECT_EQ(m1.fc.bias, m2.fc.bias);
}

TEST(Train, RejectsDegenerateDatasets) {
    Classifier m(16, 16);
    TrainConfig tc;
    EXPECT_THROW(train(m, {}, {}, tc), ConfigError);

    SynthConfig cfg;
    cfg.image_size = 16;
    cfg.lesion_radius_min = 2;
    cfg.lesion_radius_max = 4;
    std::vector<Sample> one_class = {generate_sample(cfg, Label::normal, 1),
                                     generate_sample(cfg, Label::normal, 2)};
    EXPECT_THROW(train(m, one_class, {}, tc), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(97);
    Classifier m(16, 16);
    m.init_weights(17);
    Tensor img = random_image(rng, 16);
    Tensor before = forward_logits(m, img);

    std::string path = temp_path("hspi_ckpt_roundtrip.hspc");
    CheckpointMeta meta;
    meta.seed = 17;
    meta.test_accuracy = 0.5;
    save_checkpoint(m, meta, path);
    CheckpointMeta back;
    Classifier loaded = load_checkpoint(path, &back);
    Tensor after = forward_logits(loaded, img);
    EXPECT_EQ(before.data, after.data);
    EXPECT_EQ(back.seed, 17u);
    EXPECT_DOUBLE_EQ(back.test_accuracy, 0.5);
    fs::remove(path);
}

TEST(Checkpoint, TruncatedFileIsCorruptionError) {
    Classifier m(16, 16);
    m.init_weights(19);
    std::string path = temp_path("hspi_ckpt_trunc.hspc");
    save_checkpoint(m, {}, path);
    std::string bytes = file_bytes(path);
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size() / 2));
    os.close();
    EXPECT_THROW(load_checkpoint(path), IoError);
    fs::remove(path);
}

TEST(Checkpoint, UnknownVersionIsError) {
    Classifier m(16, 16);
    m.init_weights(23);
    std::string path = temp_path("hspi_ckpt_version.hspc");
    save_checkpoint(m, {}, path);
    std::string bytes = file_bytes(path);
    bytes[4] = 99;  // version word
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
    os.close();
    EXPECT_THROW(load_checkpoint(path), IoError);
    fs::remove(path);
}

TEST(Checkpoint, BadMagicIsError) {
    std::string path = temp_path("hspi_ckpt_magic.hspc");
    std::ofstream os(path, std::ios::binary);
    os << "JUNKJUNKJUNKJUNK";
    os.close();
    EXPECT_THROW(load_checkpoint(path), IoError);
    fs::remove(path);
}
