#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "hspi/hierarchy.hpp"
#include "hspi/psmi.hpp"
#include "hspi/spi.hpp"
#include "hspi/synth.hpp"
#include "hspi/train.hpp"

namespace hspi {

// Everything a pipeline run needs, JSON round-trippable. The "paper" preset
// uses the published hyperparameters at 224x224; the "desk" preset scales
// the run down for CPU-sized experiments and is the default everywhere.
struct RunConfig {
    std::uint64_t seed = 1;
    int jobs = 1;

    // image / schedule
    int image_size = 64;
    int num_sizes = 5;     // I
    int grid_base = 3;     // H_i = grid_base + i
    int stages = 6;        // J
    int benchmark = 1;     // i_b

    // mask training + CPF
    double zeta = 0.5;
    double alpha = 5e-3;
    double beta = 0.08;
    double lambda = 1.0;
    double learning_rate = 1e-2;
    int epochs = 2000;     // n^t
    int check_every = 50;

    // patch selection
    int vote_threshold = 3;  // epsilon

    SynthConfig synth;       // counts here are the train split
    int test_normal_count = 50;
    int test_diseased_count = 50;
    TrainConfig train;

    // Component seeds are derived from the one run seed so a single --seed
    // pins every artifact.
    SynthConfig synth_split(bool test) const {
        SynthConfig s = synth;
        s.image_size = image_size;
        if (test) {
            s.normal_count = test_normal_count;
            s.diseased_count = test_diseased_count;
        }
        s.seed = derive_seed(seed, test ? 0xA2 : 0xA1);
        return s;
    }

    TrainConfig train_config() const {
        TrainConfig t = train;
        t.seed = derive_seed(seed, 0xB1);
        return t;
    }

    SizeSchedule schedule() const {
        SizeSchedule s;
        s.num_sizes = num_sizes;
        s.grid_base = grid_base;
        s.stages = stages;
        s.image_size = image_size;
        s.benchmark = benchmark;
        return s;
    }

    CpfConfig cpf() const {
        CpfConfig c;
        c.alpha = alpha;
        c.beta = beta;
        c.lambda = lambda;
        c.learning_rate = learning_rate;
        c.total_epochs = epochs;
        c.check_every = check_every;
        c.zeta = zeta;
        return c;
    }

    PsmiConfig psmi() const { return {vote_threshold, benchmark}; }

    void validate() const {
        schedule().validate();
        cpf().validate();
        if (vote_threshold < 0 || vote_threshold > num_sizes - 1)
            throw ConfigError("vote threshold must lie in [0, I-1]");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        if (test_normal_count < 0 || test_diseased_count < 0)
            throw ConfigError("test split counts must be nonnegative");
    }
};

inline RunConfig desk_preset() {
    RunConfig c;  // defaults above are the desk scale
    c.synth.image_size = 64;
    c.synth.normal_count = 250;
    c.synth.diseased_count = 250;
    c.synth.lesion_radius_min = 5.0;
    c.synth.lesion_radius_max = 11.0;
    return c;
}

inline RunConfig paper_preset() {
    RunConfig c;
    c.image_size = 224;
    c.num_sizes = 10;
    c.grid_base = 6;
    c.stages = 15;
    c.benchmark = 1;
    c.epochs = 10000;
    c.vote_threshold = 8;
    c.synth.image_size = 224;
    c.synth.lesion_radius_min = 16.0;
    c.synth.lesion_radius_max = 38.0;
    return c;
}

inline RunConfig preset_by_name(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "paper") return paper_preset();
    throw ConfigError("unknown preset: " + name + " (expected desk or paper)");
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["image_size"] = c.image_size;
    j["num_sizes"] = c.num_sizes;
    j["grid_base"] = c.grid_base;
    j["stages"] = c.stages;
    j["benchmark"] = c.benchmark;
    j["zeta"] = c.zeta;
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["lambda"] = c.lambda;
    j["learning_rate"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["check_every"] = c.check_every;
    j["vote_threshold"] = c.vote_threshold;
    j["synth"] = {{"image_size", c.synth.image_size},
                  {"normal_count", c.synth.normal_count},
                  {"diseased_count", c.synth.diseased_count},
                  {"test_normal_count", c.test_normal_count},
                  {"test_diseased_count", c.test_diseased_count},
                  {"lesion_count_max", c.synth.lesion_count_max},
                  {"lesion_radius_min", c.synth.lesion_radius_min},
                  {"lesion_radius_max", c.synth.lesion_radius_max},
                  {"vessel_count", c.synth.vessel_count},
                  {"noise_amplitude", c.synth.noise_amplitude}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay}};
    return j;
}

// Overlay JSON values onto an existing config; absent keys keep their values.
inline void run_config_merge_json(RunConfig& c, const nlohmann::json& j) {
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
    c.image_size = j.value("image_size", c.image_size);
    c.num_sizes = j.value("num_sizes", c.num_sizes);
    c.grid_base = j.value("grid_base", c.grid_base);
    c.stages = j.value("stages", c.stages);
    c.benchmark = j.value("benchmark", c.benchmark);
    c.zeta = j.value("zeta", c.zeta);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.lambda = j.value("lambda", c.lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.check_every = j.value("check_every", c.check_every);
    c.vote_threshold = j.value("vote_threshold", c.vote_threshold);
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        c.synth.image_size = s.value("image_size", c.synth.image_size);
        c.synth.normal_count = s.value("normal_count", c.synth.normal_count);
        c.synth.diseased_count = s.value("diseased_count", c.synth.diseased_count);
        c.test_normal_count = s.value("test_normal_count", c.test_normal_count);
        c.test_diseased_count = s.value("test_diseased_count", c.test_diseased_count);
        c.synth.lesion_count_max = s.value("lesion_count_max", c.synth.lesion_count_max);
        c.synth.lesion_radius_min = s.value("lesion_radius_min", c.synth.lesion_radius_min);
        c.synth.lesion_radius_max = s.value("lesion_radius_max", c.synth.lesion_radius_max);
        c.synth.vessel_count = s.value("vessel_count", c.synth.vessel_count);
        c.synth.noise_amplitude = s.value("noise_amplitude", c.synth.noise_amplitude);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.momentum = t.value("momentum", c.train.momentum);
        c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    }
}

inline RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base) {
    RunConfig c = base;
    run_config_merge_json(c, j);
    return c;
}

inline RunConfig load_run_config(const std::string& path, const RunConfig& base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config JSON in " + path + ": " + e.what());
    }
    return run_config_from_json(j, base);
}

}  // namespace hspi
