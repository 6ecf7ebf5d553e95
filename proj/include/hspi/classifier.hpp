#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hspi/nn.hpp"
#include "hspi/tensor.hpp"

namespace hspi {

// Binary image classifier:
//   conv(3->8,3x3,pad1) relu maxpool2
//   conv(8->16,3x3,pad1) relu maxpool2
//   conv(16->32,3x3,pad1) relu global-avg-pool dense(32->2)
// Class 0 is "normal", class 1 is "diseased". Logits are pre-softmax scores.
constexpr int kClassNormal = 0;
constexpr int kClassDiseased = 1;
constexpr int kNumClasses = 2;

template <typename T>
struct ClassifierT {
    int input_h = 0, input_w = 0;
    nn::ConvParams<T> conv1, conv2, conv3;
    nn::DenseParams<T> fc;

    ClassifierT() = default;
    ClassifierT(int h, int w)
        : input_h(h), input_w(w),
          conv1(3, 3, 3, 8, 1), conv2(3, 3, 8, 16, 1), conv3(3, 3, 16, 32, 1),
          fc(32, kNumClasses) {
        if (h % 4 || w % 4) throw ConfigError("classifier input size must be divisible by 4");
    }

    void init_weights(std::uint64_t seed) {
        Rng rng(seed);
        auto he_uniform = [&](std::vector<T>& w, int fan_in) {
            double limit = std::sqrt(6.0 / double(fan_in));
            for (T& v : w) v = T(rng.uniform(-limit, limit));
        };
        he_uniform(conv1.weight, conv1.patch());
        he_uniform(conv2.weight, conv2.patch());
        he_uniform(conv3.weight, conv3.patch());
        he_uniform(fc.weight, fc.in);
    }

    std::size_t param_count() const {
        return conv1.weight.size() + conv1.bias.size() + conv2.weight.size() +
               conv2.bias.size() + conv3.weight.size() + conv3.bias.size() +
               fc.weight.size() + fc.bias.size();
    }

    template <typename Fn>
    void for_each_param_block(Fn&& fn) {
        fn(conv1.weight); fn(conv1.bias);
        fn(conv2.weight); fn(conv2.bias);
        fn(conv3.weight); fn(conv3.bias);
        fn(fc.weight); fn(fc.bias);
    }
    template <typename Fn>
    void for_each_param_block(Fn&& fn) const {
        fn(conv1.weight); fn(conv1.bias);
        fn(conv2.weight); fn(conv2.bias);
        fn(conv3.weight); fn(conv3.bias);
        fn(fc.weight); fn(fc.bias);
    }
};

using Classifier = ClassifierT<float>;

template <typename To, typename From>
ClassifierT<To> cast(const ClassifierT<From>& m) {
    ClassifierT<To> out(m.input_h, m.input_w);
    out.conv1 = nn::cast<To>(m.conv1);
    out.conv2 = nn::cast<To>(m.conv2);
    out.conv3 = nn::cast<To>(m.conv3);
    out.fc = nn::cast<To>(m.fc);
    return out;
}

// Activations kept by forward() so the chain rule can run backwards. One
// context per worker thread; buffers are reused across calls.
template <typename T>
struct ForwardCtxT {
    TensorT<T> x0, a1, r1, p1, a2, r2, p2, a3, r3, g;
    std::vector<int> idx1, idx2;
    nn::ConvScratch<T> ws1, ws2, ws3;
};

using ForwardCtx = ForwardCtxT<float>;

template <typename T>
TensorT<T> forward_logits(const ClassifierT<T>& m, const TensorT<T>& image,
                          ForwardCtxT<T>& ctx) {
    if (image.shape.size() != 3 || image.dim(0) != m.input_h ||
        image.dim(1) != m.input_w || image.dim(2) != 3)
        throw ShapeError("classifier: image shape mismatch");
    ctx.x0 = image;
    ctx.a1 = nn::conv2d_forward(ctx.x0, m.conv1, &ctx.ws1);
    ctx.r1 = nn::relu_forward(ctx.a1);
    ctx.p1 = nn::maxpool2_forward(ctx.r1, &ctx.idx1);
    ctx.a2 = nn::conv2d_forward(ctx.p1, m.conv2, &ctx.ws2);
    ctx.r2 = nn::relu_forward(ctx.a2);
    ctx.p2 = nn::maxpool2_forward(ctx.r2, &ctx.idx2);
    ctx.a3 = nn::conv2d_forward(ctx.p2, m.conv3, &ctx.ws3);
    ctx.r3 = nn::relu_forward(ctx.a3);
    ctx.g = nn::global_avg_pool_forward(ctx.r3);
    return nn::dense_forward(ctx.g, m.fc);
}

template <typename T>
TensorT<T> forward_logits(const ClassifierT<T>& m, const TensorT<T>& image) {
    ForwardCtxT<T> ctx;
    return forward_logits(m, image, ctx);
}

// Gradients of model parameters; same layout as the model itself.
template <typename T>
struct ParamGradsT {
    nn::ConvParams<T> conv1, conv2, conv3;
    nn::DenseParams<T> fc;

    explicit ParamGradsT(const ClassifierT<T>& m)
        : conv1(3, 3, 3, 8, 1), conv2(3, 3, 8, 16, 1), conv3(3, 3, 16, 32, 1),
          fc(m.fc.in, m.fc.out) {}

    void clear() {
        auto z = [](auto& v) { std::fill(v.begin(), v.end(), typename std::decay_t<decltype(v)>::value_type(0)); };
        z(conv1.weight); z(conv1.bias);
        z(conv2.weight); z(conv2.bias);
        z(conv3.weight); z(conv3.bias);
        z(fc.weight); z(fc.bias);
    }
};

// Backpropagate <upstream, logits>. Fills *dimage with the gradient w.r.t.
// the input when requested, accumulates into *grads when requested.
template <typename T>
void backward(const ClassifierT<T>& m, ForwardCtxT<T>& ctx, const TensorT<T>& upstream,
              TensorT<T>* dimage, ParamGradsT<T>* grads) {
    TensorT<T> dg;
    nn::dense_backward(ctx.g, m.fc, upstream, &dg, grads ? &grads->fc : nullptr);
    TensorT<T> dr3 = nn::global_avg_pool_backward(ctx.r3.dim(0), ctx.r3.dim(1), dg);
    TensorT<T> da3 = nn::relu_backward(ctx.a3, dr3);
    TensorT<T> dp2;
    nn::conv2d_backward(ctx.p2, m.conv3, da3, &dp2, grads ? &grads->conv3 : nullptr,
                        &ctx.ws3);
    TensorT<T> dr2 = nn::maxpool2_backward(ctx.idx2, ctx.r2.dim(0), ctx.r2.dim(1), dp2);
    TensorT<T> da2 = nn::relu_backward(ctx.a2, dr2);
    TensorT<T> dp1;
    nn::conv2d_backward(ctx.p1, m.conv2, da2, &dp1, grads ? &grads->conv2 : nullptr,
                        &ctx.ws2);
    TensorT<T> dr1 = nn::maxpool2_backward(ctx.idx1, ctx.r1.dim(0), ctx.r1.dim(1), dp1);
    TensorT<T> da1 = nn::relu_backward(ctx.a1, dr1);
    nn::conv2d_backward(ctx.x0, m.conv1, da1, dimage, grads ? &grads->conv1 : nullptr,
                        &ctx.ws1);
}

// d<upstream, logits>/d(image).
template <typename T>
TensorT<T> input_gradient(const ClassifierT<T>& m, const TensorT<T>& image,
                          const TensorT<T>& upstream, ForwardCtxT<T>& ctx) {
    forward_logits(m, image, ctx);
    TensorT<T> dimage;
    backward(m, ctx, upstream, &dimage, static_cast<ParamGradsT<T>*>(nullptr));
    return dimage;
}

template <typename T>
TensorT<T> input_gradient(const ClassifierT<T>& m, const TensorT<T>& image,
                          const TensorT<T>& upstream) {
    ForwardCtxT<T> ctx;
    return input_gradient(m, image, upstream, ctx);
}

inline TensorT<float> softmax(const TensorT<float>& logits) {
    TensorT<float> out = logits;
    float mx = *std::max_element(out.data.begin(), out.data.end());
    double sum = 0.0;
    for (float& v : out.data) { v = std::exp(v - mx); sum += v; }
    for (float& v : out.data) v = float(v / sum);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint file: magic "HSPC", u32 version, u32 JSON header length, JSON
// architecture/metadata header, then the raw little-endian float32 parameter
// blob in layer order.

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint truncated");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
}  // namespace detail

inline void save_checkpoint(const Classifier& m, const CheckpointMeta& meta,
                            const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write("HSPC", 4);
    detail::put_u32(os, kCheckpointVersion);

    nlohmann::json hdr;
    hdr["arch"] = "conv8-conv16-conv32-gap-fc2";
    hdr["input_h"] = m.input_h;
    hdr["input_w"] = m.input_w;
    hdr["param_count"] = m.param_count();
    hdr["seed"] = meta.seed;
    hdr["train_accuracy"] = meta.train_accuracy;
    hdr["test_accuracy"] = meta.test_accuracy;
    std::string js = hdr.dump();
    detail::put_u32(os, std::uint32_t(js.size()));
    os.write(js.data(), std::streamsize(js.size()));

    m.for_each_param_block([&](const std::vector<float>& blk) {
        static_assert(sizeof(float) == 4);
        os.write(reinterpret_cast<const char*>(blk.data()),
                 std::streamsize(blk.size() * 4));
    });
    if (!os) throw IoError("write failed: " + path);
}

inline Classifier load_checkpoint(const std::string& path,
                                  CheckpointMeta* meta = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "HSPC", 4) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    std::uint32_t hlen = detail::get_u32(is);
    std::string js(hlen, '\0');
    if (!is.read(js.data(), hlen)) throw IoError("checkpoint truncated (header)");

    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    Classifier m(hdr.at("input_h").get<int>(), hdr.at("input_w").get<int>());
    if (hdr.at("param_count").get<std::size_t>() != m.param_count())
        throw IoError("checkpoint parameter count mismatch");
    if (meta) {
        meta->seed = hdr.value("seed", std::uint64_t(0));
        meta->train_accuracy = hdr.value("train_accuracy", 0.0);
        meta->test_accuracy = hdr.value("test_accuracy", 0.0);
    }
    m.for_each_param_block([&](std::vector<float>& blk) {
        if (!is.read(reinterpret_cast<char*>(blk.data()), std::streamsize(blk.size() * 4)))
            throw IoError("checkpoint truncated (parameters)");
    });
    return m;
}

}  // namespace hspi
