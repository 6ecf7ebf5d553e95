#pragma once

#include <vector>

#include "hspi/classifier.hpp"
#include "hspi/synth.hpp"

namespace hspi {

struct TrainConfig {
    int epochs = 90;
    int batch_size = 16;
    double learning_rate = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean cross-entropy per epoch
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

inline double accuracy(const Classifier& m, const std::vector<Sample>& set) {
    if (set.empty()) return 0.0;
    ForwardCtx ctx;
    int hits = 0;
    for (const Sample& s : set) {
        Tensor logits = forward_logits(m, s.image, ctx);
        int pred = logits.data[kClassDiseased] > logits.data[kClassNormal]
                       ? kClassDiseased : kClassNormal;
        int want = s.label == Label::diseased ? kClassDiseased : kClassNormal;
        hits += pred == want;
    }
    return double(hits) / double(set.size());
}

// Mini-batch SGD with momentum on the cross-entropy loss. Single-threaded:
// the parameter trajectory must be identical for a given seed.
inline TrainReport train(Classifier& m, const std::vector<Sample>& train_set,
                         const std::vector<Sample>& test_set, const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0)
        throw ConfigError("train: epochs, batch size and learning rate must be positive");
    if (train_set.empty()) throw ConfigError("train: empty dataset");
    bool has_normal = false, has_diseased = false;
    for (const Sample& s : train_set)
        (s.label == Label::normal ? has_normal : has_diseased) = true;
    if (!has_normal || !has_diseased)
        throw ConfigError("train: dataset must contain both classes");

    m.init_weights(cfg.seed);
    ParamGradsT<float> grads(m);
    ParamGradsT<float> velocity(m);
    velocity.clear();
    ForwardCtx ctx;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5u));

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    TrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // step decay stabilizes the endgame; without it accuracy can cycle
        double lr = epoch >= (2 * cfg.epochs) / 3 ? cfg.learning_rate * 0.1
                                                  : cfg.learning_rate;
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
            int bs = int(end - start);
            grads.clear();
            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train_set[std::size_t(order[k])];
                Tensor logits = forward_logits(m, s.image, ctx);
                Tensor p = softmax(logits);
                int want = s.label == Label::diseased ? kClassDiseased : kClassNormal;
                loss_sum += -std::log(std::max(1e-12, double(p.data[std::size_t(want)])));
                Tensor up = p;  // d(CE)/d(logits) = softmax - onehot
                up.data[std::size_t(want)] -= 1.0f;
                for (float& v : up.data) v /= float(bs);
                backward(m, ctx, up, static_cast<Tensor*>(nullptr), &grads);
            }
            auto step = [&](std::vector<float>& w, std::vector<float>& g,
                            std::vector<float>& v) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    float upd = g[i] + float(cfg.weight_decay) * w[i];
                    v[i] = float(cfg.momentum) * v[i] - float(lr) * upd;
                    w[i] += v[i];
                    if (!std::isfinite(w[i])) throw NumericError("diverged: non-finite parameter");
                }
            };
            step(m.conv1.weight, grads.conv1.weight, velocity.conv1.weight);
            step(m.conv1.bias, grads.conv1.bias, velocity.conv1.bias);
            step(m.conv2.weight, grads.conv2.weight, velocity.conv2.weight);
            step(m.conv2.bias, grads.conv2.bias, velocity.conv2.bias);
            step(m.conv3.weight, grads.conv3.weight, velocity.conv3.weight);
            step(m.conv3.bias, grads.conv3.bias, velocity.conv3.bias);
            step(m.fc.weight, grads.fc.weight, velocity.fc.weight);
            step(m.fc.bias, grads.fc.bias, velocity.fc.bias);
        }
        report.epoch_loss.push_back(loss_sum / double(train_set.size()));
    }
    report.train_accuracy = accuracy(m, train_set);
    report.test_accuracy = accuracy(m, test_set);
    return report;
}

}  // namespace hspi
